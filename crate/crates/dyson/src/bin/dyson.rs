fn main() {
    std::process::exit(dyson::cli::run(std::env::args_os().collect()));
}
