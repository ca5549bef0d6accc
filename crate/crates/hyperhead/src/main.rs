use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(hyperhead::cli::main_code())
}
