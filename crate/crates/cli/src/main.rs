use std::process::ExitCode;

fn main() -> ExitCode {
    orbitrl_cli::run(std::env::args_os())
}
