fn main() {
    std::process::exit(spiking_ips::cli::main_with_args(std::env::args_os()));
}
