fn main() {
    let count: u32 = 11;
    println!("count = {}", count);
}
