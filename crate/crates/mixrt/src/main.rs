fn main() {
    std::process::exit(mixrt::cli::main_with_args(std::env::args_os()));
}
