fn main() {
    std::process::exit(augcast::cli::run());
}
