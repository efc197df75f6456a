//! `csr` — experiment harness for continuous scene representations.
//!
//! Subcommands generate scenes and run the rearrangement, tracking,
//! retrieval, and probe experiments. Every command is reproducible: the
//! same configuration and seed produce byte-identical outputs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CommonArgs, RunConfig};

#[derive(Parser)]
#[command(name = "csr", version, about = "Continuous scene representation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// External detection stream (JSON lines, one frame per line) to
    /// cluster instead of synthetic streams.
    #[arg(long)]
    stream: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scene JSON files plus a manifest.
    GenScenes(CommonArgs),
    /// Run rearrangement episodes across the ablation rows.
    Rearrange(CommonArgs),
    /// Cluster detection streams and score them with ARI.
    Track(TrackArgs),
    /// Score triplet retrieval across the sigma sweep.
    Retrieve(CommonArgs),
    /// Train linear probes on edge features and report accuracy.
    Probe(CommonArgs),
}

fn run() -> anyhow::Result<usize> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenScenes(args) => commands::gen_scenes(&RunConfig::resolve(args)?),
        Command::Rearrange(args) => commands::rearrange(&RunConfig::resolve(args)?),
        Command::Track(args) => {
            let cfg = RunConfig::resolve(&args.common)?;
            commands::track(&cfg, args.stream.as_deref())
        }
        Command::Retrieve(args) => commands::retrieve(&RunConfig::resolve(args)?),
        Command::Probe(args) => commands::probe(&RunConfig::resolve(args)?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} work item(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
