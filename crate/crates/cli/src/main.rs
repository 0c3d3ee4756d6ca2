use std::process::ExitCode;

fn main() -> ExitCode {
    loadcast_cli::run(std::env::args_os())
}
