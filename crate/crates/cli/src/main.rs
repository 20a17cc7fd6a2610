fn main() {
    std::process::exit(spinekit_cli::run(std::env::args_os()));
}
