fn main() {
    std::process::exit(ionlink::cli::run(std::env::args_os()));
}
