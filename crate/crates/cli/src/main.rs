fn main() {
    std::process::exit(bode_limits_cli::main_with_args(std::env::args_os()));
}
