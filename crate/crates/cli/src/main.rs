use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(switchback_cli::run(std::env::args_os()))
}
