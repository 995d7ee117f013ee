fn main() -> std::process::ExitCode {
    spdelab::cli::main()
}
