fn main() {
    std::process::exit(fdbeam::cli::main_with_args(std::env::args_os()));
}
