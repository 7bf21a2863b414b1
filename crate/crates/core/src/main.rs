fn main() {
    std::process::exit(torlink::cli::run());
}
