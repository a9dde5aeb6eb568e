fn main() {
    std::process::exit(balancebot::cli::main());
}
