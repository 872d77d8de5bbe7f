fn main() {
    std::process::exit(asyncnav::harness::cli::run(std::env::args_os()));
}
