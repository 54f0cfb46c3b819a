fn main() {
    std::process::exit(lexcascade::cli::run(std::env::args_os()));
}
