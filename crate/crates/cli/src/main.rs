//! `relcorr` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or parameter error, 2 I/O or input file
//! error, 3 correction consensus not above `--thr-cons`.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<relcorr_core::Error>() {
            return match e {
                relcorr_core::Error::Io { .. } | relcorr_core::Error::Parse { .. } => EXIT_IO,
                _ => EXIT_USAGE,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_USAGE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Correct(a) => commands::correct(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Envelope(a) => commands::envelope(a),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(exit_code_for(&e))
    })
}
