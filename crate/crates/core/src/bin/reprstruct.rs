fn main() {
    std::process::exit(reprstruct::cli::main());
}
