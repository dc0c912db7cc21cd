// candidate ranking playground
fn main() {
    let alpha: u8 = -1;
    let beta: bool = 2;
    let gamma: char = 3;
    println!("{} {} {}", alpha, beta, gamma);
}
