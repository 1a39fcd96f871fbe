fn main() -> std::process::ExitCode {
    stosplit_cli::main()
}
