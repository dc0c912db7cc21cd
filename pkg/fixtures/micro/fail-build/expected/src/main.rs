fn main() {
    let total: u32 = 8.0;
    println!("total = {}", total);
}
