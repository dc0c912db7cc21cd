fn describe<T: std::fmt::Display>(value: T) -> String {
    format!("value = {}", value)
}

fn main() {
    println!("{}", describe(42));
}
