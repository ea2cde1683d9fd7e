fn main() {
    std::process::exit(stgl::cli::run_cli(std::env::args_os()));
}
