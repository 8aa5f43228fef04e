fn main() -> std::process::ExitCode {
    srrg::cli::run()
}
