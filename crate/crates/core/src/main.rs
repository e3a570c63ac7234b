fn main() {
    println!("flowharnack CLI: under construction");
}
