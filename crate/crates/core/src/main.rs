fn main() {
    std::process::exit(mcre::cli::main_with_args(std::env::args_os()));
}
