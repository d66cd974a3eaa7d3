fn main() {
    std::process::exit(icaoct::cli::run_command(std::env::args_os()));
}
