fn main() {
    std::process::exit(stable_posi_cli::main_with(std::env::args_os().collect()));
}
