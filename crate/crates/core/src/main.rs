fn main() {
    std::process::exit(sasegan::cli::run(std::env::args_os()));
}
