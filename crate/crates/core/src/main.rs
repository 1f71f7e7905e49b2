fn main() -> std::process::ExitCode {
    vactor::cli::main()
}
