fn main() {
    std::process::exit(nearfield::cli::main_with_args(std::env::args_os()));
}
