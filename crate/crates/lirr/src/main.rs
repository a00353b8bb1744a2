fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(lirr::harness::cli(&args[1..]));
}
