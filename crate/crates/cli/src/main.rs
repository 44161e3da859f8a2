fn main() {
    std::process::exit(typoprobe_cli::run(std::env::args_os()));
}
