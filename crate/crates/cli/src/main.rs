//! `funcut`: file-based pipeline for functional cut-off curves on CGM data.
//!
//! Exit codes: 0 success, 1 computation error, 2 usage or file error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use funcut::cgm::GapMode;
use funcut::simulation::U2Mode;
use funcut::{Centrality, Criterion, ScaleMode};

#[derive(Debug, Parser)]
#[command(name = "funcut", version, about = "Optimal functional cut-off curves for CGM quantile curves")]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse CGM series, drop incomplete days and write quantile curves.
    Ingest(IngestArgs),
    /// Estimate the threshold family and the optimal cut-point.
    Fit(FitArgs),
    /// Percentile bootstrap for the cut-point, metrics and bands.
    Bootstrap(BootstrapArgs),
    /// Apply a frozen cut-off to a (new) cohort of curves.
    Classify(ClassifyArgs),
    /// Run the synthetic replicate study.
    Simulate(SimulateArgs),
    /// Conventional glycaemic indices, with scalar cut-points when labels are given.
    Indices(IndicesArgs),
    /// ROC curve and AUC of the functional margins.
    Roc(RocArgs),
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// How missing time within a day is counted.
    #[arg(long, default_value = "cumulative", value_parser = parse_gap_mode)]
    pub gap_mode: GapMode,

    /// Missing minutes tolerated per day.
    #[arg(long, default_value_t = 120.0)]
    pub max_gap: f64,

    /// Subjects with fewer retained days are excluded.
    #[arg(long, default_value_t = 2)]
    pub min_days: usize,

    /// Nominal sampling interval in minutes.
    #[arg(long, default_value_t = 5.0)]
    pub interval: f64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Number of interior grid points ρ_k = k/(m+1).
    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub curves: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "youden", value_parser = parse_criterion)]
    pub criterion: Criterion,
    #[arg(long, default_value = "pooled-mean", value_parser = parse_centrality)]
    pub centrality: Centrality,
    #[arg(long, default_value = "unit", value_parser = parse_scale)]
    pub scale: ScaleMode,
    /// Restrict exact candidates to `lower:upper`.
    #[arg(long, conflicts_with = "grid")]
    pub range: Option<String>,
    /// Search `points` equispaced values: `lower:upper:points`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Estimate μ/σ on this fraction of subjects and score the rest.
    #[arg(long)]
    pub split_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Also report a nondecreasing version of the cut-off curve; optional
    /// odd moving-average window applied first.
    #[arg(long, num_args = 0..=1, default_missing_value = "1", value_name = "WINDOW")]
    pub smooth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(short = 'B', long = "replicates", default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Consecutive single-class resamples tolerated per replicate.
    #[arg(long, default_value_t = 100)]
    pub max_redraws: usize,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Frozen cut-off JSON written by `fit`.
    #[arg(long)]
    pub cutoff: PathBuf,
    #[arg(long)]
    pub curves: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Location separations (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub a: Vec<f64>,
    /// Scale separations (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub b: Vec<f64>,
    /// Sample sizes (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub n: Vec<usize>,
    #[arg(short = 'R', long = "replicates", default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, value_delimiter = ',', default_value = "youden,max_sensitivity,max_specificity", value_parser = parse_criterion)]
    pub criteria: Vec<Criterion>,
    #[arg(long, default_value_t = 2.0)]
    pub v: f64,
    #[arg(long, default_value_t = 100)]
    pub grid_size: usize,
    #[arg(long, default_value = "literal", value_parser = parse_u2_mode)]
    pub u2_mode: U2Mode,
    #[arg(long, default_value = "pooled-mean", value_parser = parse_centrality)]
    pub centrality: Centrality,
}

#[derive(Debug, Args)]
pub struct IndicesArgs {
    #[arg(long)]
    pub series: PathBuf,
    /// When given, each index is also used as a scalar classifier.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "youden", value_parser = parse_criterion)]
    pub criterion: Criterion,
    /// Apply the day filter before computing indices.
    #[arg(long)]
    pub filter_days: bool,
    #[command(flatten)]
    pub filter: FilterArgs,
    #[arg(long, default_value_t = 1.0)]
    pub conga_hours: f64,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    #[arg(long)]
    pub curves: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "pooled-mean", value_parser = parse_centrality)]
    pub centrality: Centrality,
    #[arg(long, default_value = "unit", value_parser = parse_scale)]
    pub scale: ScaleMode,
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    s.parse().map_err(|e: funcut::Error| e.to_string())
}

fn parse_centrality(s: &str) -> Result<Centrality, String> {
    s.parse().map_err(|e: funcut::Error| e.to_string())
}

fn parse_scale(s: &str) -> Result<ScaleMode, String> {
    s.parse().map_err(|e: funcut::Error| e.to_string())
}

fn parse_gap_mode(s: &str) -> Result<GapMode, String> {
    s.parse().map_err(|e: funcut::Error| e.to_string())
}

fn parse_u2_mode(s: &str) -> Result<U2Mode, String> {
    s.parse().map_err(|e: funcut::Error| e.to_string())
}

/// 2 for missing/unreadable/malformed inputs, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<funcut::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
        if cause.is::<commands::UsageError>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
