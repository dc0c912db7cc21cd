struct Holder {
    inner: &str,
}

fn main() {
    let text = String::from("keepsake");
    let holder = Holder { inner: &text };
    println!("{}", holder.inner);
}
