fn main() {
    std::process::exit(graftlab_cli::run(std::env::args_os()));
}
