fn main() {
    std::process::exit(wrdp::cli::run());
}
