fn main() {
    println!("lagkit");
}
