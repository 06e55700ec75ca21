fn main() {
    std::process::exit(genprior::cli::run_cli(std::env::args_os()));
}
