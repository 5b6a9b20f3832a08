fn main() {
    std::process::exit(roar_core::cli::run(std::env::args_os()));
}
