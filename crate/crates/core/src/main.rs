fn main() {
    std::process::exit(chf_core::experiments::cli::run_cli(std::env::args_os()));
}
