fn main() {
    std::process::exit(racetune::cli::main_with_args(std::env::args_os()));
}
