fn main() {
    std::process::exit(jifr::cli::run(std::env::args_os()));
}
