fn main() {
    std::process::exit(sonnet_cli::app::main_with(std::env::args_os()));
}
