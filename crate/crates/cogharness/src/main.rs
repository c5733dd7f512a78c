fn main() {
    std::process::exit(cogharness::cli::main_entry());
}
