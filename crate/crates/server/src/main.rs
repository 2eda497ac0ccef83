fn main() {
    std::process::exit(artsearch::cli::run(std::env::args_os()));
}
