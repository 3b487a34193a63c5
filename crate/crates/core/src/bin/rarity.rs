fn main() {
    std::process::exit(rarity::cli::run(std::env::args_os()));
}
