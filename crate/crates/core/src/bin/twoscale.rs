fn main() -> std::process::ExitCode {
    twoscale_sa::cli::main()
}
