fn main() {
    std::process::exit(vcnet_cli::run(std::env::args_os()));
}
