//! `vaddiff`: dataset difficulty analytics from the command line.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vaddiff_core::ingest::Polarity;
use vaddiff_core::stats::Binning;
use vaddiff_core::{Error, FeatureType};

#[derive(Parser, Debug)]
#[command(name = "vaddiff", version, about = "Difficulty analytics for skeleton-based video anomaly datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: Global,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Dataset manifest (JSON). Tracklets and labels default to its siblings.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Tracklet file; defaults to tracklets.tsv next to the manifest.
    #[arg(long, global = true)]
    pub tracklets: Option<PathBuf>,
    /// Frame label file; defaults to labels.csv next to the manifest.
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Window length in frames [default: 24].
    #[arg(long, global = true)]
    pub t: Option<usize>,
    /// Window stride in frames [default: 6].
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Social node slots [default: 35].
    #[arg(long, global = true)]
    pub nodes: Option<usize>,
    /// Keypoints per pose [default: 17].
    #[arg(long, global = true)]
    pub keypoints: Option<usize>,
    /// Skip first-frame centering of pose and trajectory windows.
    #[arg(long, global = true)]
    pub no_center: bool,
    /// Center social windows as well.
    #[arg(long, global = true)]
    pub center_social: bool,
    /// Drop people beyond the node capacity instead of failing.
    #[arg(long, global = true)]
    pub truncate_social: bool,
    #[arg(long, global = true, value_parser = parse_feature)]
    pub feature: Option<FeatureType>,
    /// `auto`, `count:<n>` or `width:<w>`.
    #[arg(long, global = true, default_value = "auto", value_parser = parse_binning)]
    pub binning: Binning,
    #[arg(long, global = true, value_enum, default_value = "anomaly")]
    pub polarity: PolarityArg,
    /// Latent embeddings file; switches dist-hist to latent distances.
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Frame score file for `metrics`.
    #[arg(long, global = true)]
    pub scores: Option<PathBuf>,
    /// Window file produced by `windows`, used instead of rebuilding.
    #[arg(long, global = true)]
    pub windows: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarityArg {
    Anomaly,
    Normality,
}

impl From<PolarityArg> for Polarity {
    fn from(p: PolarityArg) -> Self {
        match p {
            PolarityArg::Anomaly => Polarity::AnomalyScore,
            PolarityArg::Normality => Polarity::NormalityScore,
        }
    }
}

fn parse_feature(s: &str) -> Result<FeatureType, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_binning(s: &str) -> Result<Binning, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a dataset and write validation.json.
    Validate,
    /// Build feature windows (all feature types unless --feature).
    Windows,
    /// Signed difference of means per feature type.
    Sdom,
    /// Distances to the training mean (or latent prior): histogram and box statistics.
    DistHist,
    /// AUC-ROC, AUC-PR and EER of a frame score file.
    Metrics {
        /// Average the metrics over videos instead of pooling frames.
        #[arg(long)]
        per_video: bool,
    },
    /// Generate a synthetic dataset with oracle score files.
    Synth(SynthArgs),
    /// Consolidated difficulty report over all feature types.
    Report,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// JSON synthetic spec; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub videos: Option<usize>,
    /// Defaults to half of --videos when that is given.
    #[arg(long)]
    pub train_videos: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub persons: Option<usize>,
    /// Trajectory shift in pixels; replaces the anomaly modes.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub anomaly_fraction: Option<f64>,
    #[arg(long)]
    pub segment_len: Option<usize>,
}

/// Everything that can end a run with a non-zero exit.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl Failure {
    fn kind(&self) -> &'static str {
        match self {
            Failure::Core(e) => e.kind(),
            Failure::Usage(_) => "usage",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Usage(m) => m.clone(),
        }
    }
}

fn report_failure(f: &Failure) {
    let doc = serde_json::json!({ "error": f.message(), "kind": f.kind() });
    eprintln!("{doc}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VADDIFF_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            report_failure(&Failure::Usage(first.trim_start_matches("error: ").to_string()));
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            report_failure(&f);
            ExitCode::FAILURE
        }
    }
}
