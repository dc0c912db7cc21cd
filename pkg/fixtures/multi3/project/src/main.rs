fn main() {
    let first: u8 = -1;
    let second: bool = 2;
    let third: char = 3;
    println!("{} {} {}", first, second, third);
}
