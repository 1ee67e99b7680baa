fn main() {
    std::process::exit(qmetro::cli::run(std::env::args()));
}
