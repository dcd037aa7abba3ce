fn main() {
    std::process::exit(asianqmc::cli::main_entry());
}
