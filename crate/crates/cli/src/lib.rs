//! Batch front end for post-nonlinear separation: generate synthetic data,
//! fit a separator, and evaluate outputs against known sources. Every run
//! leaves CSV signals and JSON reports in an output directory.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_evaluate, cmd_generate, cmd_separate, evaluate_blocks, SeparateArgs};
pub use config::RunConfig;
pub use error::{CliError, CliResult, EXIT_BAD_INPUT, EXIT_IO};
pub use report::{Evaluation, GroundTruth, RunReport};

#[derive(Debug, Parser)]
#[command(
    name = "pnl",
    version,
    about = "Post-nonlinear blind source separation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write sources.csv, observations.csv and ground_truth.json for a scenario
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Fit a separator and write outputs.csv, separator.json, report.json, trace.csv
    Separate {
        observations: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Sources CSV used to score the run in report.json
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Score outputs against sources and write eval.json
    Evaluate {
        outputs: PathBuf,
        sources: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

/// Runs one subcommand and returns the line to print on success.
pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Generate {
            config,
            seed,
            out_dir,
        } => {
            let truth = cmd_generate(config, *seed, out_dir)?;
            Ok(format!(
                "generated seed={} channels={} samples={} in {}",
                truth.seed,
                truth.scenario.n,
                truth.scenario.t,
                out_dir.display()
            ))
        }
        Command::Separate {
            observations,
            config,
            seed,
            truth,
            out_dir,
        } => {
            let report = cmd_separate(&SeparateArgs {
                observations,
                config: config.as_deref(),
                seed: *seed,
                truth: truth.as_deref(),
                out_dir,
            })?;
            let last = report.trace.last().map_or(f64::NAN, |r| r.total);
            let mut line = format!(
                "iterations={} converged={} contrast={last:.6}",
                report.iterations, report.converged
            );
            if let Some(eval) = &report.evaluation {
                line.push(' ');
                line.push_str(&eval.summary());
            }
            Ok(line)
        }
        Command::Evaluate {
            outputs,
            sources,
            out_dir,
        } => Ok(cmd_evaluate(outputs, sources, out_dir)?.summary()),
    }
}
