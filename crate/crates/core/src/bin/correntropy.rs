fn main() {
    std::process::exit(correntropy::harness::cli_main(std::env::args_os()));
}
