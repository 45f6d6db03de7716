fn main() {
    std::process::exit(cir::cli::run());
}
