fn main() {
    std::process::exit(wmink_cli::cli_main(std::env::args_os()));
}
