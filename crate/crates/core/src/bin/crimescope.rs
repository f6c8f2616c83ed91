fn main() {
    std::process::exit(crimescope::cli::main_with_args(std::env::args_os()));
}
