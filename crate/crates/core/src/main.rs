fn main() {
    std::process::exit(resoformer::cli::main_with_args(std::env::args_os()));
}
