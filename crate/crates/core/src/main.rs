fn main() {
    std::process::exit(itemfair::cli::run(std::env::args_os()));
}
