// SPDX-License-Identifier: Apache-2.0

//! `knn`: evaluate, compare and tune k-nearest-neighbor digit classifiers.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for malformed or
//! inconsistent data, 3 for I/O failures.

mod commands;
mod config;

use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use knn_core::MetricId;

use config::{CommonArgs, RunConfig};

#[derive(Parser)]
#[command(name = "knn", version, about = "Exact k-NN digit classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the test set and report accuracy with a confidence interval
    Evaluate(CommonArgs),
    /// Plain metric versus --metric on the same data, with a significance test
    Compare(CommonArgs),
    /// k-fold cross-validation over the training set
    Crossval(CommonArgs),
    /// Show one test image, its neighbors and per-class mean distances
    Inspect {
        #[command(flatten)]
        common: CommonArgs,
        /// Test-set index to inspect
        #[arg(long)]
        index: usize,
    },
}

/// A bad flag value or combination; exits with status 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_IO: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<knn_core::Error>() {
            return if e.is_io() { EXIT_IO } else { EXIT_DATA };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_DATA
}

fn run(cli: Cli) -> Result<()> {
    let (common, rendered) = match cli.command {
        Command::Evaluate(a) => {
            let cfg = RunConfig::from_args(&a, MetricId::Plain)?;
            (a, commands::evaluate(cfg)?)
        }
        Command::Compare(a) => {
            let cfg = RunConfig::from_args(&a, MetricId::Sliding)?;
            (a, commands::compare(cfg)?)
        }
        Command::Crossval(a) => {
            let cfg = RunConfig::from_args(&a, MetricId::Plain)?;
            (a, commands::crossval(cfg)?)
        }
        Command::Inspect { common, index } => {
            let cfg = RunConfig::from_args(&common, MetricId::Plain)?;
            (common, commands::inspect(cfg, index)?)
        }
    };
    match &common.out {
        Some(path) => {
            std::fs::write(path, &rendered.body).with_context(|| format!("writing {}", path.display()))?;
            if let Some(note) = rendered.note {
                println!("{note}");
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(rendered.body.as_bytes())?;
            out.flush()?;
            if let Some(note) = rendered.note {
                eprintln!("{note}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
