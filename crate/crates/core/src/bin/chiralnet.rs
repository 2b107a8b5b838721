fn main() {
    std::process::exit(chiralnet::cli::main_with(std::env::args_os()));
}
