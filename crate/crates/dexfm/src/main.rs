use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(dexfm::cli::run(std::env::args_os()))
}
