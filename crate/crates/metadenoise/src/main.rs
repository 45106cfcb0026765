fn main() {
    std::process::exit(metadenoise::cli::run_cli(std::env::args_os()));
}
