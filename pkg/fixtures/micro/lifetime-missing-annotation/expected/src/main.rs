struct Holder<'a> {
    inner: &'a str,
}

fn main() {
    let text = String::from("keepsake");
    let holder = Holder { inner: &text };
    println!("{}", holder.inner);
}
