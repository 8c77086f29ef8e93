fn main() {
    std::process::exit(ffc::cli::main_with_args(std::env::args_os()));
}
