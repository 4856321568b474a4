fn main() {
    std::process::exit(factvae::cli::run(std::env::args_os()));
}
