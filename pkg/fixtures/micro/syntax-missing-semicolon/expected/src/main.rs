fn main() {
    let width = 4;
    let height = 7;
    println!("area = {}", width * height);
}
