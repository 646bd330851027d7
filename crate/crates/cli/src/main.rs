fn main() {
    std::process::exit(nesphere_cli::run(std::env::args_os()));
}
