//! `activity-hmm`: regime classification, diagnostics and model comparison for daily event counts.

mod bundle;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use activity_hmm::{Family, ObsKind};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "activity-hmm", version, about = "Active/Inactive regime detection for daily event counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the HMM for each window length and decode the regimes.
    Classify(ClassifyArgs),
    /// Ripley's K, KS tests, Q-Q tables and per-state AIC tables.
    Diagnose(DiagnoseArgs),
    /// Rolling HMM / SEHM / baseline prediction with AIC and SMAPE.
    Compare(CompareArgs),
    /// Generate a synthetic series from a fully specified model.
    Simulate(SimulateArgs),
    /// Reclassify after stepwise augmentation with extra records.
    Robustness(RobustnessArgs),
    /// Write the stepwise augmented series.
    Merge(MergeArgs),
}

#[derive(Clone, Copy, Debug, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: activity_hmm::Error| e.to_string())
}

fn parse_obs(s: &str) -> Result<ObsKind, String> {
    s.parse().map_err(|e: activity_hmm::Error| e.to_string())
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("expected YYYY-MM-DD: {e}"))
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct InputArgs {
    /// CSV with `date,count` rows or one row per incident with a `date` column.
    #[arg(long)]
    pub input: PathBuf,
    /// First day of the observation period (defaults to the first record).
    #[arg(long, value_parser = parse_date)]
    pub start: Option<NaiveDate>,
    /// Last day of the observation period (defaults to the last record).
    #[arg(long, value_parser = parse_date)]
    pub end: Option<NaiveDate>,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct FitArgs {
    /// Window length(s) in days, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "15")]
    pub delta: Vec<usize>,
    /// poisson | szeta | geom | polya | hzeta | hgeom
    #[arg(long, value_parser = parse_family, default_value = "geom")]
    pub family: Family,
    /// x | y | xy | m | dt
    #[arg(long, value_parser = parse_obs, default_value = "x")]
    pub obs: ObsKind,
    #[arg(long, default_value_t = 2)]
    pub states: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Extra randomized Baum-Welch starts.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    /// Keep the trailing partial window.
    #[arg(long)]
    pub include_partial: bool,
}

#[derive(Args, Clone, Debug, Serialize)]
pub struct OutArgs {
    /// Output directory.
    #[serde(skip)]
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug, Serialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// KS significance level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Largest Ripley distance in days.
    #[arg(long, default_value_t = 50)]
    pub h_max: u64,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    /// Confidence level of the bootstrap band.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Keep only durations up to this many days in the per-state KS tests (one value per state).
    #[arg(long, value_delimiter = ',')]
    pub ks_cap: Vec<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Training horizons (number of inter-arrival durations), comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub horizons: Vec<usize>,
    /// hmm, sehm, baseline (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "hmm,sehm,baseline")]
    pub estimators: Vec<String>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Seed for the SEHM multi-start.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub sehm_starts: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimKind {
    /// Window-level regime switching with daily geometric counts.
    Hmm,
    /// Regime switching over waiting times between active days.
    DtHmm,
    /// Self-exciting hurdle model.
    Sehm,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimKind::Hmm)]
    pub model: SimKind,
    #[arg(long, default_value_t = 0.09)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 0.36)]
    pub gamma1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub p0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub q0: f64,
    #[arg(long, default_value_t = 15)]
    pub delta: usize,
    /// Number of windows (hmm) or active days (dt-hmm).
    #[arg(long, default_value_t = 219)]
    pub length: usize,
    /// Days to simulate (sehm).
    #[arg(long, default_value_t = 3286)]
    pub days: usize,
    #[arg(long, default_value_t = 0.05)]
    pub b: f64,
    /// Excitation magnitude (sehm).
    #[arg(long, default_value_t = 0.3)]
    pub excitation: f64,
    #[arg(long, default_value_t = 0.5)]
    pub omega: f64,
    #[arg(long, default_value_t = 2.5)]
    pub s: f64,
    /// Geometric parameter of extra events on an active day (dt-hmm).
    #[arg(long, default_value_t = 0.3)]
    pub marks: f64,
    #[arg(long, value_parser = parse_date, default_value = "2000-01-01")]
    pub start: NaiveDate,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Extra records (same CSV formats as the input).
    #[arg(long)]
    pub extra: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct MergeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub extra: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ACTIVITY_HMM_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Config(format!("ACTIVITY_HMM_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(CliError::Config("ACTIVITY_HMM_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Classify(a) => commands::classify(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Robustness(a) => commands::robustness(&a),
        Command::Merge(a) => commands::merge(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("activity-hmm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
