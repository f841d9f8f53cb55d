fn main() {
    std::process::exit(chung_lab_core::cli::run_from(std::env::args_os()));
}
