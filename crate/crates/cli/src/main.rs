fn main() {
    std::process::exit(lyapgauge_cli::run(std::env::args_os()));
}
