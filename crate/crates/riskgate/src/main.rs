fn main() {
    std::process::exit(riskgate::cli::run());
}
