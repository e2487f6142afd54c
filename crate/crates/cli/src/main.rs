fn main() {
    std::process::exit(tcpspread_cli::main_with_args(std::env::args_os()));
}
