fn main() {
    std::process::exit(vessel_cli::run(std::env::args_os()));
}
