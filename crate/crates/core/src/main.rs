fn main() -> std::process::ExitCode {
    ntklab::cli::run(std::env::args_os())
}
