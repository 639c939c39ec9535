fn main() {
    std::process::exit(ssclust::cli::run(std::env::args_os()));
}
