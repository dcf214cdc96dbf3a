fn main() {
    std::process::exit(autophoto::cli::run(std::env::args_os()));
}
