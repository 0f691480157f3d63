fn main() {
    std::process::exit(ddlab::cli::main_with_args(std::env::args_os()));
}
