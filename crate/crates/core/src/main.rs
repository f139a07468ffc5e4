fn main() -> std::process::ExitCode {
    wipp_mlmc::cli::main()
}
