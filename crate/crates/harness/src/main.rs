fn main() {
    std::process::exit(peakq_harness::cli::run(std::env::args_os()));
}
