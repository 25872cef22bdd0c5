fn main() {
    std::process::exit(fastslow::cli::main());
}
