fn main() {
    std::process::exit(gnep::cli::run(std::env::args_os()));
}
