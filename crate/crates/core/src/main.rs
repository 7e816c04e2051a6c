fn main() {
    std::process::exit(nematic_well::cli::main_with_args(std::env::args_os()));
}
