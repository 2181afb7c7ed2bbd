fn main() {
    std::process::exit(emoseq::cli::main_with_args(std::env::args_os()));
}
