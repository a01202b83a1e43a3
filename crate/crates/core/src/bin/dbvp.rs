fn main() {
    std::process::exit(dbvp_core::cli::run(std::env::args_os()));
}
