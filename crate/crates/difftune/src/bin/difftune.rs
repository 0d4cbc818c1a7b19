fn main() {
    std::process::exit(difftune::cli::main_with(std::env::args_os()));
}
