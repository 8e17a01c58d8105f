fn main() {
    std::process::exit(teamlearn::cli::run(std::env::args_os()));
}
