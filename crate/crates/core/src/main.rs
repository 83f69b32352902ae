fn main() -> std::process::ExitCode {
    partisan_lens::cli::main()
}
