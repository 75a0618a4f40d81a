fn main() {
    std::process::exit(avf_cli::main_with_args(std::env::args_os()));
}
