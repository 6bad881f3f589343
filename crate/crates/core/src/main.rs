use std::process::ExitCode;

fn main() -> ExitCode {
    lanewave::cli::run(std::env::args_os())
}
