fn main() {
    std::process::exit(resgene_cli::run(std::env::args_os()));
}
