use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "nubblematch",
    version,
    about = "Patch-feature cosine matching with channel dropping, and the diagnostics to study it"
)]
pub struct Cli {
    /// Worker threads; results are identical for every value.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    /// JSON object of flag values applied beneath explicit flags.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// L2-normalize every patch of a feature grid.
    Normalize(NormalizeArgs),
    /// Zero a random (or given) channel subset in one or two grids.
    Drop(DropArgs),
    /// Zero each patch's largest-magnitude channels.
    Trim(TrimArgs),
    /// Greedily choose channels whose removal reduces foreground mismatches.
    Prune(PruneArgs),
    /// Foreground similarity map and/or best-match map of a target grid.
    Match(MatchArgs),
    /// Extract prompt points and a box from a similarity map.
    Prompts(PromptsArgs),
    /// Threshold a similarity map into a patch mask.
    Segment(SegmentArgs),
    /// Intersection over union of two masks.
    Iou(IouArgs),
    /// Count foreground patches whose best match is background.
    Mismatch(MismatchArgs),
    /// Dominant-channel and channel-submergence statistics.
    Diagnose(DiagnoseArgs),
    /// Interaction strength of an input set through a feed-forward network.
    Interaction(InteractionArgs),
    /// Write synthetic two-cluster instances and a manifest.
    Synth(SynthArgs),
    /// Sweep drop ratios over a set of instances.
    Sweep(SweepArgs),
    /// Average improvement as instances accumulate.
    Curve(CurveArgs),
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Either an explicit mask file or a ratio with a seed.
#[derive(Debug, Args, Clone)]
pub struct DropSource {
    /// Drop mask JSON to apply instead of sampling one.
    #[arg(long, value_name = "JSON", conflicts_with = "ratio")]
    pub mask: Option<PathBuf>,
    /// Fraction of channels to drop, in [0, 1).
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DropArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Second grid to receive the same mask.
    #[arg(long, requires = "target_out")]
    pub target_in: Option<PathBuf>,
    #[arg(long, requires = "target_in")]
    pub target_out: Option<PathBuf>,
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
    #[command(flatten)]
    pub source: DropSource,
}

#[derive(Debug, Args)]
pub struct TrimArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub m_per_patch: usize,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub fg: PathBuf,
    #[arg(long)]
    pub budget: usize,
    #[arg(long, default_value_t = 8)]
    pub k_bg: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregatorArg {
    Max,
    Mean,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    /// Reference foreground mask; required for --out.
    #[arg(long)]
    pub fg: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "max")]
    pub aggregator: AggregatorArg,
    /// Similarity map as an (H,W) '<f8' npy file.
    #[arg(long, requires = "fg")]
    pub out: Option<PathBuf>,
    /// Similarity map as a JSON report.
    #[arg(long, requires = "fg")]
    pub json_out: Option<PathBuf>,
    /// Best-match map as a JSON report.
    #[arg(long)]
    pub best_out: Option<PathBuf>,
    #[command(flatten)]
    pub source: DropSource,
}

#[derive(Debug, Args)]
pub struct PromptsArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub min_separation: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IouArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MismatchArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub fg: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub source: DropSource,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Feature grids; repeat for several images.
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0004)]
    pub nu: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// CSV of images whose largest |channel value| exceeds each threshold.
    #[arg(long)]
    pub max_hist_out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub max_thresholds: Vec<f64>,
    /// CSV of images whose mean variance falls below each threshold.
    #[arg(long)]
    pub var_hist_out: Option<PathBuf>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.0001,0.0002,0.0003,0.0004,0.0005,0.0006,0.0008,0.001"
    )]
    pub var_thresholds: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct InteractionArgs {
    #[arg(long, value_name = "JSON")]
    pub query: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 0.3)]
    pub fg_fraction: f64,
    #[arg(long, default_value_t = 0.8)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise_sigma: f64,
    #[arg(long)]
    pub noise_channel: Option<usize>,
    #[arg(long, default_value_t = 4.0)]
    pub dominant_value: f64,
    #[arg(long, default_value_t = 0.05)]
    pub nubble_fraction: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of instances; instance i uses seed + i.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    ProxyIou,
    MismatchRate,
    PromptHitRate,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "proxy-iou")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, value_enum, default_value = "max")]
    pub aggregator: AggregatorArg,
    /// Prompt points per instance for prompt-hit-rate.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub min_separation: usize,
    /// Registered drop strategy: none, nubble, trim, greedy.
    #[arg(long, default_value = "nubble")]
    pub strategy: String,
    /// Background candidates per foreground patch for the greedy strategy.
    #[arg(long, default_value_t = 8)]
    pub k_bg: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5"
    )]
    pub ratios: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-cell CSV: ratio, trial, instance, seed, metric, dropped channels.
    #[arg(long)]
    pub trials_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, default_value_t = 0.1)]
    pub ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
}
