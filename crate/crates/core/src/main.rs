fn main() {
    std::process::exit(cornea_oct::cli::run(std::env::args_os()));
}
