fn main() {
    std::process::exit(skewscope_cli::run(std::env::args_os()));
}
