fn main() {
    std::process::exit(longsurv_cli::main_with_args(std::env::args_os()));
}
