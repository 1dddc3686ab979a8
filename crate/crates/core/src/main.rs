use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(paraxial_tr::cli::run_from(std::env::args_os()))
}
