fn main() {
    std::process::exit(coxbvs::cli::main_with_args(std::env::args_os()));
}
