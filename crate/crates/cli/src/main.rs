fn main() -> std::process::ExitCode {
    apkinetic_cli::main_with(std::env::args_os())
}
