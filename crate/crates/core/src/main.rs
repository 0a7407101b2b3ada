fn main() {
    std::process::exit(mfucrl::cli::main_with_args(std::env::args_os()));
}
