fn main() {
    std::process::exit(atelier::cli::run(std::env::args().skip(1).collect()));
}
