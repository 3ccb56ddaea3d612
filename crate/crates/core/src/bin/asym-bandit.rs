fn main() {
    std::process::exit(asym_bandit::harness::cli_main(std::env::args_os()));
}
