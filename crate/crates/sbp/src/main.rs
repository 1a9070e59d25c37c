use std::process::ExitCode;

fn main() -> ExitCode {
    sbp::cli::run(std::env::args_os())
}
