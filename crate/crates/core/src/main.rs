fn main() { std::process::exit(rram_baseband::cli::main()); }
