//! `weinet`: train, evaluate and verify the recall-task models.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use weinet_core::{OpKind, SplitRole};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "weinet", version, about = "Associative-memory RNN experiments on the recall task")]
struct Cli {
    /// Config file with [model], [task], [optimizer] and [run] sections.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; sets the init, shuffle and data seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    /// `section.key=value`, applied after the file. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    /// fullmatrix, rowcol and gated update weights.
    Variant,
    /// Router off (K=1) against router on (K=2).
    Router,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write metrics and checkpoints.
    Train,
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: SplitRole,
    },
    /// Finite-difference gradient checks for every family and variant.
    Gradcheck {
        /// Corrupt the backward rule of one op (for testing the checker).
        #[arg(long, value_parser = parse_op)]
        fault: Option<OpKind>,
    },
    /// Closed-form unroll and fast-weights degeneracy checks.
    Oracle,
    /// Run every config in a directory and tabulate epochs to converge.
    Compare {
        #[arg(long, value_name = "DIR")]
        configs: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Per-epoch validation accuracy for a sweep of runs.
    Curves {
        #[arg(long, value_enum)]
        sweep: Sweep,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write the train, val and test splits as cache files.
    GenData,
}

fn parse_split(s: &str) -> Result<SplitRole, String> {
    s.parse().map_err(|e: weinet_core::tasks::TaskError| e.to_string())
}

fn parse_op(s: &str) -> Result<OpKind, String> {
    s.parse().map_err(|e: weinet_core::EngineError| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let base = || config::parse_config(cli.config.as_deref(), cli.seed, &cli.overrides);
    match cli.command {
        Command::Train => commands::train(&base()?, &cli.out),
        Command::Eval { checkpoint, split } => commands::eval(&base()?, &checkpoint, split, &cli.out),
        Command::Gradcheck { fault } => commands::gradcheck(cli.seed.unwrap_or(1), fault, &cli.out),
        Command::Oracle => commands::oracle(cli.seed.unwrap_or(1), &cli.out),
        Command::Compare { configs, jobs } => {
            commands::compare(&configs, cli.seed, &cli.overrides, jobs, &cli.out)
        }
        Command::Curves { sweep, jobs } => commands::curves(&base()?, sweep, jobs, &cli.out),
        Command::GenData => commands::gen_data(&base()?, &cli.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
