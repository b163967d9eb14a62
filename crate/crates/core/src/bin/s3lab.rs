fn main() {
    std::process::exit(s3lab::cli::main());
}
