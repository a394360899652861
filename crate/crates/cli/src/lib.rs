//! Command-line front end: synthesis, relabeling, training, evaluation,
//! timing and plotting over JSON Lines recording files.

pub mod commands;
pub mod error;
pub mod plot;
pub mod recording_file;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, Result};
pub use recording_file::{RecordingFile, RECORDING_FORMAT, RECORDING_VERSION};

#[derive(Debug, Parser)]
#[command(name = "radclutter", version, about = "Radar clutter labeling and segmentation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated recording.
    Synth(SynthArgs),
    /// Derive moving/clutter/stationary labels from annotations.
    Relabel(RelabelArgs),
    /// Train a segmentation network.
    Train(TrainArgs),
    /// Score a trained network on the latest scan of every cloud.
    Eval(EvalArgs),
    /// Time inference including resampling.
    Bench(BenchArgs),
    /// Render one scan as an SVG scatter plot.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario file (TOML). Defaults to the named preset.
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RelabelArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Meters.
    #[arg(long, default_value_t = 0.3)]
    pub range_tol: f64,
    /// Azimuth tolerance `min:max` in degrees.
    #[arg(long, default_value = "2:4")]
    pub az_tol: String,
    /// Degrees at which the azimuth tolerance reaches its maximum.
    #[arg(long, default_value_t = 60.0)]
    pub az_tol_angle: f64,
    /// m/s.
    #[arg(long, default_value_t = 0.5)]
    pub v_thresh: f64,
    /// Class-distribution JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NetSize {
    /// Published widths.
    Full,
    /// Reduced widths for CPU training (variant B only).
    Toy,
    /// Gradient-check size (variant B only).
    Tiny,
}

/// Cloud preparation overrides; unset values come from the variant preset
/// or the checkpoint.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub window_ms: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// none, random, lowest-rcs, old-only, fixed-queue or nn-postprocess.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Seed of resampling and padding draws.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled training recordings.
    #[arg(long = "train", required = true, num_args = 1..)]
    pub train: Vec<PathBuf>,
    /// Labeled validation recordings.
    #[arg(long = "val", num_args = 1..)]
    pub val: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = VariantArg::B)]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value_t = NetSize::Full)]
    pub net: NetSize,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Several training seeds, e.g. `1..5` or `1,3,7`; overrides `--seed`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Checkpoint path; with several seeds `-seed<N>` is appended to the stem.
    #[arg(long = "model")]
    pub model: PathBuf,
    /// Continue from this checkpoint up to `--epochs`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Per-seed and mean validation metrics.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "data", required = true, num_args = 1..)]
    pub data_files: Vec<PathBuf>,
    /// Expected variant; a checkpoint of another variant is rejected.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub confusion_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "data", required = true, num_args = 1..)]
    pub data_files: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Clouds run before timing starts.
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotMode {
    Labels,
    Confusion,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub scan_id: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = PlotMode::Labels)]
    pub mode: PlotMode,
    /// Checkpoint supplying predictions in confusion mode.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Older scans drawn pale in labels mode, milliseconds.
    #[arg(long, default_value_t = 0.0)]
    pub window_ms: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Relabel(a) => commands::relabel(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Plot(a) => commands::plot(&a),
    }
}
