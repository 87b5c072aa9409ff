fn main() {
    std::process::exit(carets::cli::main_with_args(std::env::args_os()));
}
