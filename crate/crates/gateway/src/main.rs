fn main() {
    std::process::exit(decarb_gateway::cli::run(std::env::args_os()));
}
