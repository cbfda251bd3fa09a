//! `tbac`: validate, oracle, run, sweep, audit, check, generate.

mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::{Cli, Outcome};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli) {
        Outcome::Ok => ExitCode::SUCCESS,
        Outcome::Failed(msg) => {
            if !msg.is_empty() {
                eprintln!("{msg}");
            }
            ExitCode::from(1)
        }
        Outcome::Usage(msg) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
