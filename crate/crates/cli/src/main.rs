fn main() {
    std::process::exit(hicrec_cli::run(std::env::args_os()));
}
