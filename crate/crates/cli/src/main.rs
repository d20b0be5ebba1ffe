fn main() {
    std::process::exit(dydw_cli::main_with_args(std::env::args_os()));
}
