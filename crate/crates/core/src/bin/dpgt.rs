fn main() {
    std::process::exit(dpgt::harness::main_entry());
}
