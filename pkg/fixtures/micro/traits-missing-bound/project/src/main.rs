fn describe<T>(value: T) -> String {
    format!("value = {}", value)
}

fn main() {
    println!("{}", describe(42));
}
