fn main() {
    std::process::exit(codemix_rnnt::cli::run_from_args(std::env::args_os()));
}
