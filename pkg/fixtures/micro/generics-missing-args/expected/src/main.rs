struct Pair<T> {
    first: T,
    second: T,
}

fn main() {
    let p: Pair<i32> = Pair { first: 1, second: 2 };
    println!("{} {}", p.first, p.second);
}
