fn main() {
    std::process::exit(pave_forge::cli::run(std::env::args_os()));
}
