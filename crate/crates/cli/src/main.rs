mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hetcrf", version, about = "Self-supervised heterogeneous graph embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the graph comes from: a dataset directory or a synthetic spec.
#[derive(Args, Clone, Debug)]
#[group(required = true, multiple = false)]
pub struct Source {
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Synthetic planted-partition spec (JSON, partial allowed).
    #[arg(long, value_name = "SPEC.json")]
    pub synthetic: Option<PathBuf>,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Run seed; overrides the config file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for generating a synthetic graph.
    #[arg(long, default_value_t = 0)]
    pub graph_seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize node/edge counts, meta-path and PathSim statistics.
    Inspect {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_name = "CONFIG.json")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        graph_seed: u64,
    },
    /// Train and write a checkpoint plus the loss history.
    Train {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CONFIG.json")]
        config: Option<PathBuf>,
        /// Config override, e.g. `pos_aug=none` or `optimizer.lr=1e-3`.
        #[arg(long, value_name = "KEY=VALUE")]
        ablate: Vec<String>,
    },
    /// Linear-probe and clustering evaluation of a checkpoint.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        common: Common,
        /// Evaluation settings (probe iterations, repeats, ...).
        #[arg(long, value_name = "EVAL.json")]
        config: Option<PathBuf>,
    },
    /// Check the positive/negative gradient balance of multi-positive InfoNCE.
    #[command(name = "probe-theorem1")]
    ProbeTheorem1 {
        #[arg(long, value_name = "PROBE.json")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a synthetic graph as a dataset directory.
    Synth {
        #[arg(long, value_name = "SPEC.json")]
        synthetic: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        graph_seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Inspect { source, config, out, graph_seed } => commands::inspect(&source, config.as_deref(), out.as_deref(), graph_seed),
        Command::Train { source, common, config, ablate } => commands::train(&args, &source, &common, config.as_deref(), &ablate),
        Command::Eval { checkpoint, source, common, config } => commands::eval(&args, &checkpoint, &source, &common, config.as_deref()),
        Command::ProbeTheorem1 { config, out, seed } => commands::probe(&args, config.as_deref(), &out, seed),
        Command::Synth { synthetic, out, graph_seed } => commands::synth(synthetic.as_deref(), &out, graph_seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
