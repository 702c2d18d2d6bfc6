//! Argument definitions and subcommand implementations for the `groundfit` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use groundfit::pointcloud::ScanFormat;

pub mod commands;

pub use commands::run;

/// Self-supervised LiDAR ground segmentation.
///
/// Results go to stdout as JSON (CSV for `ablate`); diagnostics go to stderr and are
/// controlled by GROUNDFIT_LOG=error|warn|info|debug.
#[derive(Debug, Parser)]
#[command(name = "groundfit", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Number of worker threads.
    #[arg(long, global = true, value_name = "N", default_value_t = 1, value_parser = parse_workers)]
    pub parallel: usize,
    /// Base seed; scan `i` of a batch uses seed + i.
    #[arg(long, global = true, value_name = "K")]
    pub seed: Option<u64>,
    /// Scan file format.
    #[arg(long, global = true, default_value_t = ScanFormat::XyzF32)]
    pub format: ScanFormat,
    #[arg(long, global = true)]
    pub no_prefilter: bool,
    #[arg(long, global = true)]
    pub no_refine: bool,
    /// Lower height quantile removed as noise.
    #[arg(long, global = true, value_name = "Q")]
    pub quantile: Option<f64>,
    /// Residual threshold D in meters.
    #[arg(long, global = true, value_name = "D")]
    pub threshold: Option<f64>,
    /// Pillar size in meters.
    #[arg(long, global = true, value_name = "V")]
    pub pillar: Option<f64>,
    /// Recovery margin tau in meters.
    #[arg(long, global = true, value_name = "T")]
    pub tau: Option<f64>,
}

fn parse_workers(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("expected a positive integer, got '{s}'")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Clean,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pseudolabeler,
    Ransac,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label scans with the surface-fitting pipeline.
    Label {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Label scans with the RANSAC plane baseline.
    Ransac {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Generate synthetic scenes with ground truth.
    Synth {
        /// Scene spec (TOML).
        #[arg(long, value_name = "PATH", required_unless_present = "suite", conflicts_with = "suite")]
        spec: Option<PathBuf>,
        /// Write the standard ten-scene suite instead.
        #[arg(long)]
        suite: Option<Suite>,
    },
    /// Score predicted masks against ground truth.
    Eval {
        #[arg(long, value_name = "DIR")]
        pred: PathBuf,
        #[arg(long, value_name = "DIR")]
        truth: PathBuf,
        /// Scan directory; enables the flat / non-flat partition.
        #[arg(long, value_name = "DIR")]
        scans: Option<PathBuf>,
        /// Read truth as SemanticKITTI labels, mapped to ground by this TOML file.
        #[arg(long, value_name = "PATH")]
        ground_classes: Option<PathBuf>,
        /// Print an aligned text table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Measure labeling throughput.
    Bench {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Pseudolabeler)]
        method: Method,
    },
    /// Sweep pillar size and recovery margin, writing an mIoU grid as CSV.
    Ablate {
        #[arg(long, required_unless_present = "scenes", conflicts_with = "scenes")]
        suite: Option<Suite>,
        /// Directory of scans with `<name>.label` truth masks, as written by `synth`.
        #[arg(long, value_name = "DIR")]
        scenes: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.50, 1.00])]
        pillars: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.10, 0.20])]
        taus: Vec<f64>,
        /// Write the CSV here instead of stdout.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
}
