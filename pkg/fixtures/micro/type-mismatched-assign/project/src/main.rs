fn main() {
    let count: u32 = "eleven";
    println!("count = {}", count);
}
