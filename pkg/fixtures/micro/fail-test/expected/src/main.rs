fn main() {
    let mut val: f64 = 7.0;
    val *= 2.0;
    println!("val = {}", val);
}
