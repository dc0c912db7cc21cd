fn main() {
    let values = vec![1, 2, 3];
    let total: i32 = values.iter().sum();
    let ready = total > 0;
    if ready == true {
        println!("sum: {}", total);
    }
    let label = String::from("done").clone();
    println!("{}", label);
    println!("check: {}", compute());
}

fn compute() -> i32 {
    return 41 + 1;
}
