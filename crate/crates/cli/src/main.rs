fn main() {
    println!("qca");
}
