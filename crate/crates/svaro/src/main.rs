fn main() {
    std::process::exit(svaro::cli::run());
}
