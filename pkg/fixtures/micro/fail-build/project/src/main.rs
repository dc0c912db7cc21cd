fn main() {
    let total: u32 = 7.5;
    println!("total = {}", total);
}
