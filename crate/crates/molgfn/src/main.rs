use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(molgfn::cli::run(std::env::args_os()))
}
