//! Command-line driver: `preview`, `train`, `gridsearch`, `analyze`,
//! `throughput` and `replay`.
//!
//! Exit codes: 0 on success, 2 for usage or input errors, 3 when training
//! diverges.

mod commands;
mod data;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::CutoutMode;
use crate::smallnet::{Probe, TrainConfig};

pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("training diverged at epoch {epoch} ({layer}); partial log kept at {csv}")]
    Diverged { epoch: usize, layer: String, csv: PathBuf },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Diverged { .. } => EXIT_DIVERGED,
        }
    }
}

pub(crate) fn input_err(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "cutout", version, about = "Cutout augmentation experiments on small convolutional networks")]
pub struct Cli {
    /// Seed for splits, initialization, shuffling and augmentation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Loader worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Write original and cutout-augmented samples as PPM pairs.
    Preview(PreviewArgs),
    /// Train the small network and write its log, checkpoint and statistics.
    Train(TrainArgs),
    /// Sweep cutout lengths over repeated 90/10 splits.
    Gridsearch(GridArgs),
    /// Compare sorted activation profiles of two checkpoints.
    Analyze(AnalyzeArgs),
    /// Measure loader speedup of `--workers` threads over one.
    Throughput(ThroughputArgs),
    /// Re-run the command recorded in a manifest into `--out-dir`.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Preview(_) => "preview",
            Command::Train(_) => "train",
            Command::Gridsearch(_) => "gridsearch",
            Command::Analyze(_) => "analyze",
            Command::Throughput(_) => "throughput",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    Stl10,
    Raw,
    Synthetic,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    /// Data file; repeat for several CIFAR batches or raw files.
    #[arg(long = "data-path")]
    pub data_path: Vec<PathBuf>,
    /// STL-10 label file.
    #[arg(long)]
    pub labels_path: Option<PathBuf>,
    #[arg(long, default_value_t = 4_000)]
    pub synthetic_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub synthetic_seed: u64,
    /// Keep only the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    AlwaysClipped,
    ConstrainedP50,
}

impl From<ModeArg> for CutoutMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::AlwaysClipped => CutoutMode::AlwaysClipped,
            ModeArg::ConstrainedP50 => CutoutMode::ConstrainedP50,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CutoutArgs {
    /// Patch side in pixels; 0 disables cutout.
    #[arg(long, default_value_t = 0)]
    pub cutout_length: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::AlwaysClipped)]
    pub cutout_mode: ModeArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AugmentArgs {
    /// Zero padding before the random crop; defaults to an eighth of the side.
    #[arg(long)]
    pub pad: Option<usize>,
    /// Drop the pad, crop and flip stages.
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Cifar,
    Svhn,
}

/// Named after the fields of [`TrainConfig`]; unset flags take the preset.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainFlags {
    #[arg(long, value_enum, default_value_t = Preset::Cifar)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    /// Comma-separated epochs, or `none`.
    #[arg(long)]
    pub milestones: Option<String>,
    #[arg(long)]
    pub factor: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub nesterov: Option<bool>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Dropout before the classifier.
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
}

impl TrainFlags {
    pub fn resolve(&self, seed: u64, workers: usize) -> Result<TrainConfig, CliError> {
        let base = match self.preset {
            Preset::Cifar => TrainConfig::cifar(),
            Preset::Svhn => TrainConfig::svhn(),
        };
        let milestones = match self.milestones.as_deref() {
            None => base.milestones.clone(),
            Some(s) if s.trim().is_empty() || s.trim() == "none" => Vec::new(),
            Some(s) => parse_list(s, "milestones")?,
        };
        let cfg = TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            lr0: self.lr0.unwrap_or(base.lr0),
            milestones,
            factor: self.factor.unwrap_or(base.factor),
            momentum: self.momentum.unwrap_or(base.momentum),
            nesterov: self.nesterov.unwrap_or(base.nesterov),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            seed,
            workers,
        };
        cfg.validate().map_err(input_err)?;
        Ok(cfg)
    }
}

pub(crate) fn parse_list(s: &str, what: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| CliError::Input(format!("bad {what} entry '{t}': {e}"))))
        .collect()
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PreviewArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cutout: CutoutArgs,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub augment: AugmentArgs,
    #[command(flatten)]
    pub cutout: CutoutArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Held-out fraction used for evaluation when no evaluation files are given.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Evaluation set in the same format as the training data.
    #[arg(long)]
    pub eval_path: Vec<PathBuf>,
    #[arg(long)]
    pub eval_labels_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub augment: AugmentArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, value_enum, default_value_t = ModeArg::AlwaysClipped)]
    pub cutout_mode: ModeArg,
    /// Comma-separated patch lengths; 0 is the baseline.
    #[arg(long, default_value = "0,4,8,12,16")]
    pub lengths: String,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint_a: PathBuf,
    #[arg(long)]
    pub checkpoint_b: PathBuf,
    /// Normalization statistics written by `train`; computed from the data
    /// when absent.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Comma-separated subset of relu1, relu2, logits.
    #[arg(long, default_value = "relu1,relu2,logits")]
    pub layers: String,
}

impl AnalyzeArgs {
    pub fn probes(&self) -> Result<Vec<Probe>, CliError> {
        self.layers.split(',').map(|s| s.trim().parse::<Probe>().map_err(input_err)).collect()
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ThroughputArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub augment: AugmentArgs,
    #[command(flatten)]
    pub cutout: CutoutArgs,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Runs a parsed command; `argv` is recorded in the manifest.
pub fn run(cli: &Cli, argv: &[String]) -> Result<RunManifest, CliError> {
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", cli.out_dir.display())))?;
    match &cli.command {
        Command::Preview(a) => commands::preview(cli, a, argv),
        Command::Train(a) => commands::train(cli, a, argv),
        Command::Gridsearch(a) => commands::gridsearch(cli, a, argv),
        Command::Analyze(a) => commands::analyze(cli, a, argv),
        Command::Throughput(a) => commands::throughput(cli, a, argv),
        Command::Replay(a) => manifest::replay(cli, a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_from<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &argv) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
