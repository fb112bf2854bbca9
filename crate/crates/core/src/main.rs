fn main() {
    std::process::exit(hemiparam::cli::main_with_args(std::env::args_os()));
}
