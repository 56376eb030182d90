use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(allgather_sim::cli::run_main())
}
