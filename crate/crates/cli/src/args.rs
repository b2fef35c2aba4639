use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use statt::data::Split;
use statt::model::AggregationMode;

#[derive(Debug, Parser)]
#[command(name = "statt", version, about = "Synthetic crop-type segmentation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene and write it as a dataset directory.
    Gen(GenArgs),
    /// Train a network and write checkpoint, history and test metrics.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Train both aggregation modes over a range of noise fractions.
    NoiseSweep(SweepArgs),
    /// Dump the mean temporal attention weights of a checkpoint.
    Attn(AttnArgs),
    /// Compare analytic and finite-difference gradients of the full loss.
    Gradcheck(GradcheckArgs),
    /// Rerun a command from its run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Dataset config (JSON); defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the scene seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model config (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Training config (JSON).
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<AggregationMode>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    pub split: Split,
    /// Metrics JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep bundle (JSON with `dataset`, `model`, `train`, `fractions`, `modes`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated noise fractions; replaces the bundle's list.
    #[arg(long)]
    pub fractions: Option<String>,
    /// Overrides both the scene and the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    pub split: Split,
    /// A class name, or `all` for one column per class.
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Model config (JSON); the tiny configuration when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Permit models above the parameter-count guard.
    #[arg(long)]
    pub allow_large: bool,
    /// Corrupt one backward rule (negative control for the check itself).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
    #[arg(long, default_value = "gradcheck")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<AggregationMode, String> {
    s.parse().map_err(|e: statt::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: statt::Error| e.to_string())
}

/// `"0,0.25, 0.5"` → `[0.0, 0.25, 0.5]`; an empty string is an empty list.
pub fn parse_fractions(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|e| format!("fraction {p:?}: {e}")))
        .collect()
}
