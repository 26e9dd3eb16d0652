fn main() {
    std::process::exit(lifshits::cli::main_with_args(std::env::args_os()));
}
