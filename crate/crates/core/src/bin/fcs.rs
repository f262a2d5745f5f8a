fn main() {
    std::process::exit(airpath::cli::run(std::env::args_os()));
}
