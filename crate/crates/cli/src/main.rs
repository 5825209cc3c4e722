use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(depthtrack_cli::run(std::env::args_os()))
}
