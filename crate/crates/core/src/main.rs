fn main() {
    std::process::exit(epxi::cli::main_with(std::env::args_os()));
}
