//! `rapref`: corpus validation, reward augmentation, implicit-reward
//! rescoring and the tabular experiments behind one binary.
//!
//! Exit codes: 0 success, 1 invalid data or failed check, 2 usage error,
//! 3 I/O error.

mod cli;
mod commands;
mod config;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};
use commands::Context;
use error::CliError;

fn run() -> Result<(), CliError> {
    let (args, config_path) = config::expand(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version print and succeed; real parse errors exit 2.
            let _ = e.print();
            if e.use_stderr() {
                return Err(CliError::Usage(String::new()));
            }
            return Ok(());
        }
    };
    let mut ctx = Context::default();
    if let Some(path) = config_path {
        let bytes = manifest::read(&path)?;
        ctx.config = Some((path, bytes));
    }
    let dispatch = || match &cli.command {
        Command::Validate(a) => commands::validate(a, &ctx),
        Command::Stats(a) => commands::stats(a, &ctx),
        Command::Rescale(a) => commands::rescale_cmd(a, &ctx),
        Command::Augment(a) => commands::augment(a, &ctx),
        Command::Ira(a) => commands::ira(a, &ctx),
        Command::Toy(a) => commands::toy(a, &ctx),
    };
    match cli.threads {
        Some(n) => rapref_core::par::with_threads(n, dispatch),
        None => dispatch(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            e.exit_code()
        }
    }
}
