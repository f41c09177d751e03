fn main() {
    std::process::exit(chansynth::cli::run());
}
