use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dosesens", version, about = "Sensitivity analysis for matched studies with treatment doses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Worst-case bounding p-values for Fisher's sharp null.
    SharpTest(SharpArgs),
    /// Unbiased estimate of a weak-null estimand and its variance bound.
    Estimate(EstimateArgs),
    /// Bounding test of a weak null at one or more Gamma values.
    WeakTest(WeakCommandArgs),
    /// Confidence intervals by test inversion across a Gamma grid.
    Ci(WeakCommandArgs),
    /// Monte Carlo size study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QCovariates {
    None,
    Means,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnDegenerate {
    Error,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimandName {
    Sate,
    EffectRatio,
    Tsate,
    AvgSlope,
    Contrast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    Vn,
    Vc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideName {
    Greater,
    Less,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Long-format CSV with one row per unit.
    pub data: PathBuf,
    #[arg(long, default_value = "set_id")]
    pub set_col: String,
    #[arg(long, default_value = "unit_id")]
    pub unit_col: String,
    #[arg(long, default_value = "dose")]
    pub dose_col: String,
    #[arg(long, default_value = "outcome")]
    pub outcome_col: String,
    /// Comma-separated covariate columns; default is every other column.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Variance design: intercept only, or intercept plus set covariate means.
    #[arg(long, value_enum, default_value = "none")]
    pub q_covariates: QCovariates,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with solver settings (`[lp] tol`, `[box] tol`, `[box] random_starts`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SharpArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Comma-separated ascending Gamma values, each >= 1.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub gamma: Vec<f64>,
    /// perm-t, wilcoxon, double-rank or custom.
    #[arg(long, default_value = "double-rank")]
    pub statistic: String,
    /// Rank doses across the whole study or within each set.
    #[arg(long, default_value = "global")]
    pub dose_rank: String,
    /// CSV (value,score) for custom dose scores.
    #[arg(long)]
    pub dose_scores: Option<PathBuf>,
    /// CSV (value,score) for custom outcome scores.
    #[arg(long)]
    pub outcome_scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct EstimandArgs {
    #[arg(long, value_enum, default_value = "tsate")]
    pub estimand: EstimandName,
    /// Dose threshold for tsate.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Hypothesized effect ratio for effect-ratio.
    #[arg(long, default_value_t = 0.0)]
    pub lambda0: f64,
    /// First intervention of a contrast: `above:C`, `below:C` or `baseline`.
    #[arg(long, default_value = "above:0.5")]
    pub first: String,
    /// Second intervention of a contrast.
    #[arg(long, default_value = "baseline")]
    pub second: String,
    #[arg(long, value_enum, default_value = "error")]
    pub on_degenerate: OnDegenerate,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimand: EstimandArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct WeakArgs {
    #[arg(long, value_enum, default_value = "vc")]
    pub method: MethodName,
    #[arg(long, value_enum, default_value = "greater")]
    pub side: SideName,
    /// Comma-separated ascending Gamma values, each >= 1.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub gamma: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub theta0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct WeakCommandArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimand: EstimandArgs,
    #[command(flatten)]
    pub weak: WeakArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML simulation config; see `protocol` and the `[sharp]` / `[weak]` tables.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Include per-replicate records in the report.
    #[arg(long)]
    pub keep_reps: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
