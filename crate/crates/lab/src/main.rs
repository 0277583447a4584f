fn main() {
    std::process::exit(lattrans_lab::cli::run_cli(std::env::args_os()));
}
