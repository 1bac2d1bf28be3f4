fn main() {
    std::process::exit(d3sr::cli::main_with_args(std::env::args_os()));
}
