use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use pqos_core::app::Label;
use pqos_core::config::{Learning, MetaAlgorithm, Mode, Regime};
use pqos_core::runner::{evaluate_checkpoint, run_campaign, summarize_dir};
use pqos_core::SimConfig;

#[derive(Parser)]
#[command(name = "pqos", about = "Train and evaluate compression/scheduling agents on a simulated uplink")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LearningArg {
    Centralized,
    Federated,
}

#[derive(Subcommand)]
enum Command {
    /// Train a campaign and write its artifact directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, value_enum)]
        learning: Option<LearningArg>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        regime: Option<Regime>,
        #[arg(long)]
        fixed_compression: Option<Label>,
        #[arg(long)]
        meta: Option<MetaAlgorithm>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Write a per-slot trace (large).
        #[arg(long)]
        trace: bool,
    },
    /// Replay a trained campaign's checkpoint with greedy policies.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Box-plot statistics of a campaign's metrics.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            mode,
            learning,
            tau,
            regime,
            fixed_compression,
            meta,
            seed,
            episodes,
            out,
            trace,
        } => {
            let mut cfg = match &config {
                Some(p) => SimConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
                None => SimConfig::default(),
            };
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(l) = learning {
                cfg.learning = match l {
                    LearningArg::Centralized => Learning::Centralized,
                    LearningArg::Federated => Learning::Federated,
                };
            }
            if let Some(t) = tau {
                cfg.latency_threshold_ms = t;
            }
            if let Some(r) = regime {
                cfg.set_regime(r);
            }
            if let Some(c) = fixed_compression {
                cfg.fixed_compression = c;
            }
            if meta.is_some() {
                cfg.meta_algorithm = meta;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            let outcome = run_campaign(&cfg, &out, trace)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
        }
        Command::Eval { checkpoint, episodes } => {
            let (_, summary) = evaluate_checkpoint(&checkpoint, episodes)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Summarize { input } => {
            let summary = summarize_dir(&input)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}
