//! The `dial` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod svg;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult, EXIT_NUMERIC, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "dial",
    version,
    about = "Domain-invariant reward learning on synthetic tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic domain pair.
    Gen(commands::gen::GenArgs),
    /// Train from a JSON config.
    Train(commands::train::TrainArgs),
    /// Score a checkpoint on ground truth or preferences.
    Eval(commands::inspect::EvalArgs),
    /// Check the target-error bound for a checkpoint.
    Bound(commands::inspect::BoundArgs),
    /// Project embeddings to 2-D.
    Project(commands::inspect::ProjectArgs),
    /// Exact W1 between two point sets.
    OracleWd(commands::inspect::OracleWdArgs),
    /// Sweep the target fraction at a fixed budget.
    Scaling(commands::scaling::ScalingArgs),
}

pub fn run(cli: &Cli) -> CliResult<()> {
    use commands::*;
    match &cli.command {
        Command::Gen(a) => gen::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => inspect::eval(a),
        Command::Bound(a) => inspect::bound(a),
        Command::Project(a) => inspect::project(a),
        Command::OracleWd(a) => inspect::oracle_wd(a),
        Command::Scaling(a) => scaling::run(a),
    }
}
