fn consume(text: String) -> usize {
    text.len()
}

fn main() {
    let message = String::from("hello");
    let length = consume(message.clone());
    println!("{}: {}", message, length);
}
