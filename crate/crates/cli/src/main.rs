use std::process::ExitCode;

fn main() -> ExitCode {
    gazekit_cli::run(std::env::args_os())
}
