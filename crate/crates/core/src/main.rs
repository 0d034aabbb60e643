fn main() {
    std::process::exit(freesurf::cli::main_with(std::env::args()));
}
