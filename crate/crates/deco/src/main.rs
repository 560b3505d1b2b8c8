fn main() -> std::process::ExitCode {
    deco::cli::main_with(std::env::args_os())
}
