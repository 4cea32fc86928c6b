fn main() {
    std::process::exit(cutout::cli::main_from(std::env::args_os()));
}
