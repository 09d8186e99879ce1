fn main() {
    std::process::exit(gazequery_cli::run(std::env::args_os()));
}
