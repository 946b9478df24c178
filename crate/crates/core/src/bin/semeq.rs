fn main() {
    std::process::exit(semeq::cli::run(std::env::args_os()));
}
