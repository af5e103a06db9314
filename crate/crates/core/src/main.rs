fn main() {
    std::process::exit(harqopt::cli::main_with_args(std::env::args_os()));
}
