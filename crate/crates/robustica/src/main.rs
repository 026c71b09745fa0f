use std::process::ExitCode;

fn main() -> ExitCode {
    robustica::cli::main_with(std::env::args_os())
}
