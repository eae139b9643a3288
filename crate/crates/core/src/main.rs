fn main() {
    std::process::exit(cinetrack_core::cli::run_from(std::env::args_os()));
}
