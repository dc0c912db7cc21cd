fn main() {
    let flag: bool = 1;
    if flag {
        println!("on");
    }
}
