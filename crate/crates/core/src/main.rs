fn main() {
    std::process::exit(radar_tta::cli::run())
}
