fn main() {
    std::process::exit(ebm::cli::main_with_args(std::env::args_os()));
}
