fn main() {
    std::process::exit(spp_core::cli::main_entry());
}
