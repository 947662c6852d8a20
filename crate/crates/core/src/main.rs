fn main() {
    std::process::exit(relapse_detect::cli::run(std::env::args_os()));
}
