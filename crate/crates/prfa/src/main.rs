fn main() -> std::process::ExitCode {
    prfa::cli::main()
}
