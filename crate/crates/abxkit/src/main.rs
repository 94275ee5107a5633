fn main() -> std::process::ExitCode {
    abxkit::cli::main()
}
