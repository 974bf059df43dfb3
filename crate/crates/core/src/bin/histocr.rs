fn main() {
    std::process::exit(histocr::cli::main_with_args(std::env::args_os()));
}
