fn main() {
    std::process::exit(ferkit::cli::main());
}
