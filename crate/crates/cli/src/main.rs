fn main() {
    std::process::exit(brenier_cli::run(std::env::args_os()));
}
