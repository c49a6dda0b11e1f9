fn main() {
    std::process::exit(lsmm_cli::run(std::env::args_os()));
}
