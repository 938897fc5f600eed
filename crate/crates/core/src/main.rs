fn main() {
    std::process::exit(qudit_qkd::cli::run(std::env::args_os()));
}
