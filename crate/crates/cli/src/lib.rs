//! Command-line pipeline: gen-graph → train-rnu → gen-rhsd → recognize, plus
//! `inspect` for any artifact. Logs go to stderr, summaries to stdout.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use infosphere_core::recommenders::RecommenderKind;

pub use config::ExperimentConfig;
pub use error::{exit, CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "infosphere", version, about = "Recommender recognition experiments")]
pub struct Cli {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// Seed for the invoked stage (graph, rnu, synth, or the single
    /// recognition master seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated master seeds for `recognize`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate the synthetic academic graph.
    GenGraph,
    /// Train the recommender-neutral user model.
    TrainRnu,
    /// Generate the synthetic dataset for one recommender.
    GenRhsd {
        #[arg(value_parser = parse_kind)]
        kind: RecommenderKind,
    },
    /// Run the recognition grid for every master seed.
    Recognize,
    /// Print a summary of any artifact.
    Inspect { path: PathBuf },
}

fn parse_kind(s: &str) -> std::result::Result<RecommenderKind, String> {
    s.parse().map_err(|e: infosphere_core::Error| e.to_string())
}

impl Cli {
    /// Loads the config file (if any) and applies flag overrides; flags win.
    pub fn resolve_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(w) = &self.workdir {
            cfg.paths.workdir = w.clone();
        }
        if let Some(l) = &self.log_level {
            cfg.log_level = l.clone();
        }
        if let Some(seed) = self.seed {
            match &self.command {
                Command::GenGraph => {
                    if let Some(g) = cfg.graph.as_mut() {
                        g.rng_seed = seed;
                    }
                }
                Command::TrainRnu => cfg.rnu.model.rng_seed = seed,
                Command::GenRhsd { .. } => cfg.synth.rng_seed = seed,
                Command::Recognize => cfg.seeds = vec![seed],
                Command::Inspect { .. } => {}
            }
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        Ok(cfg)
    }
}

/// Runs one subcommand and returns its stdout text.
pub fn run(command: &Command, cfg: &ExperimentConfig) -> Result<String> {
    match command {
        Command::GenGraph => commands::gen_graph(cfg),
        Command::TrainRnu => commands::train_rnu_cmd(cfg),
        Command::GenRhsd { kind } => commands::gen_rhsd_cmd(cfg, *kind),
        Command::Recognize => commands::recognize_cmd(cfg).map(|o| o.text),
        Command::Inspect { path } => commands::inspect(path),
    }
}
