//! Thin CLI over [`rewrite_rl::harness`]: flag parsing and exit codes only.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rewrite_rl::harness::{run, Command, HarnessError, RunConfig};

/// Conversational query-rewriting pipeline: synthesize a corpus, initialize
/// the rewriter, train reward models, run PPO, and evaluate.
#[derive(Debug, Parser)]
#[command(name = "rewrite-rl", version)]
struct Cli {
    /// Key-value config file applied over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Global seed; overrides the config file and --set.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Run directory that holds all artifacts and reports.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Single-key override, e.g. --set ppo.total_steps=40 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Generate the synthetic corpus and dialogue examples.
    Synth,
    /// Train the initial rewriter on manual rewrites.
    InitTrain,
    /// Sample candidate rewrites and persist preference pairs per metric.
    BuildPairs,
    /// Train the three Bradley-Terry reward models on the saved pairs.
    TrainRm,
    /// RL-train the rewriter with PPO against the combined reward.
    TrainPpo,
    /// Compare the four rewriting systems on the held-out split.
    Eval,
    /// Re-run PPO once per isolated reward term and tabulate the results.
    Ablate,
    /// Evaluate every saved PPO checkpoint as a ROUGE-1/MRR series.
    Trend,
    /// Print the effective configuration and exit.
    PrintConfig,
}

impl From<Cmd> for Command {
    fn from(cmd: Cmd) -> Self {
        match cmd {
            Cmd::Synth => Command::Synth,
            Cmd::InitTrain => Command::InitTrain,
            Cmd::BuildPairs => Command::BuildPairs,
            Cmd::TrainRm => Command::TrainRm,
            Cmd::TrainPpo => Command::TrainPpo,
            Cmd::Eval => Command::Eval,
            Cmd::Ablate => Command::Ablate,
            Cmd::Trend => Command::Trend,
            Cmd::PrintConfig => Command::PrintConfig,
        }
    }
}

fn execute(cli: &Cli) -> Result<(), HarnessError> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    for assignment in &cli.sets {
        config.apply_assignment(assignment)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    run(cli.command.into(), &config, cli.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
