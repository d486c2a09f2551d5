fn main() {
    std::process::exit(levy_ou::cli::main_with_args(std::env::args_os()));
}
