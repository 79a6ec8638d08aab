fn main() {
    std::process::exit(aerovox::cli::run(std::env::args_os()));
}
