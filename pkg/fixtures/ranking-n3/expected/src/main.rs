// candidate ranking playground
fn main() {
    let alpha: u8 = 1;
    let beta: bool = true;
    let gamma: char = '3';
    println!("{} {} {}", alpha, beta, gamma);
}
