//! `probfuse` command-line driver: toy body models, synthetic datasets,
//! training, prediction, evaluation sweeps and uncertainty export.

mod args;
mod config;
mod manifest;
mod plot;
mod run;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = args::Cli::parse();
    match run::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // one line, `error: <cause chain>`, so scripts can grep it
            let msg = format!("{e:#}").replace(['\n', '\r'], " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
