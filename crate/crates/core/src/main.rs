fn main() {
    std::process::exit(qdiscord::cli::main_with_args(std::env::args_os()));
}
