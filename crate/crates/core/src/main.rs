fn main() {
    std::process::exit(mps_core::cli::main_with_args(std::env::args_os()));
}
