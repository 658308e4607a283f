fn main() {
    std::process::exit(alloyembed::cli::run_cli(std::env::args_os()));
}
