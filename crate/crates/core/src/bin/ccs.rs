fn main() {
    std::process::exit(ccs::cli::main());
}
