fn main() {
    std::process::exit(scalegrasp::cli::run(std::env::args_os()));
}
