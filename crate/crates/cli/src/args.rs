use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use soda::localizer::FdrMethod;

#[derive(Debug, Parser)]
#[command(name = "soda", version, about = "Directed-information analysis of part-based detection sequences")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random stream (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "soda-out")]
    pub out: PathBuf,
    /// Worker threads, 0 for one per core. Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args, Default)]
pub struct SurfaceArgs {
    /// Sliding window length in frames (default 7).
    #[arg(long)]
    pub window: Option<usize>,
    /// FDR level q (default 0.1).
    #[arg(long)]
    pub fdr: Option<f64>,
    /// bh or by (default by).
    #[arg(long, value_parser = parse_fdr_method)]
    pub fdr_method: Option<FdrMethod>,
    /// Circular-shift surrogates per null, at least 30 (default 200).
    #[arg(long)]
    pub null_reps: Option<usize>,
}

fn parse_fdr_method(s: &str) -> Result<FdrMethod, String> {
    s.parse().map_err(|e: soda::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detections to Gibbs samples, codebook and symbol files.
    Infer {
        /// Directory of detection files (*.jsonl) or individual files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Skip writing per-frame Gibbs samples.
        #[arg(long)]
        no_samples: bool,
    },
    /// Local DI surface, peaks and bubble plot for one ordered pair.
    Surface {
        /// Symbol file of the driving sequence.
        x: PathBuf,
        /// Symbol file of the driven sequence.
        y: PathBuf,
        #[command(flatten)]
        surface: SurfaceArgs,
    },
    /// Pairwise DI matrix and nearest-neighbor classification.
    Classify {
        /// Directory of symbol files (*.sym) or individual files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Stratified splits to evaluate; split r > 0 uses a derived seed.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Also localize every ordered pair and control FDR across pairs.
        #[arg(long)]
        localize: bool,
        #[command(flatten)]
        surface: SurfaceArgs,
    },
    /// Synthetic detection corpus or coupled pair with ground truth.
    Synth {
        /// JSON corpus spec: classes, persons, arity, frames, noise.
        #[arg(long)]
        spec: PathBuf,
        /// Sequences per class; ignored with --pair.
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        /// Emit one coupled pair (x.jsonl, y.jsonl) from the first class.
        #[arg(long)]
        pair: bool,
    },
    /// Check detection files without running the pipeline.
    Validate {
        /// Directory of detection files (*.jsonl) or individual files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}
