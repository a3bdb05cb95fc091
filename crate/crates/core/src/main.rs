fn main() {
    std::process::exit(trafficlens::cli::run(std::env::args_os()));
}
