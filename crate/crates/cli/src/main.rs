use std::process::ExitCode;

fn main() -> ExitCode {
    episde_cli::run(std::env::args_os())
}
