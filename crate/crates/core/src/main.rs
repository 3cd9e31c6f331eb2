use std::process::ExitCode;

use clap::Parser;
use mce::cli::{self, Cli, FAILURE_EXIT_CODE};

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = cli::init_threads().and_then(|()| cli::run(args));
    match result {
        Ok(outcome) => {
            if outcome == cli::Outcome::Infeasible {
                eprintln!("mce: the data modes do not allow a compatible joint model (see report)");
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("mce: {e}");
            ExitCode::from(FAILURE_EXIT_CODE)
        }
    }
}
