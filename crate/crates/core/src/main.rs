use std::process::ExitCode;

use clap::Parser;
use plremix::cli::{execute, Command};
use plremix::Error;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cmd = Command::parse();
    match execute(&cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Diverged { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
