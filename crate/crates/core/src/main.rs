fn main() {
    std::process::exit(fan_core::cli::run(std::env::args_os()));
}
