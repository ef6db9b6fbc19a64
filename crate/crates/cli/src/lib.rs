//! `lobu`: synthetic data, training, backtests, sweeps and evaluation from the
//! command line.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Error that maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "lobu", version, about = "Uncertainty-aware limit order book trading toolkit")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic order book days as CSV.
    Synth(SynthArgs),
    /// Train the classifier and write a weight file.
    Train(TrainArgs),
    /// Trade one strategy over a data split and write report CSVs.
    Backtest(BacktestArgs),
    /// Grid of softmax and Bayesian thresholds over shared predictions.
    Sweep(SweepArgs),
    /// Classification metrics of the deterministic predictions.
    Evaluate(EvaluateArgs),
    /// Figure series (cumulative profit, quartiles) from earlier outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Data directory: csv files, or one subdirectory of csv files per instrument.
    #[arg(long, env = "LOBU_DATA_DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub events: Option<usize>,
    /// Instruments to generate; more than one writes a subdirectory each.
    #[arg(long, default_value_t = 1)]
    pub instruments: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Weight file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch log; defaults to `<out>.log.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Normal,
    Softmax,
    Bayesian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExitRuleArg {
    OppositeAndConfident,
    EntropyOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct ModelInput {
    #[command(flatten)]
    pub data: DataArg,
    /// Weight file from `train`.
    #[arg(long)]
    pub weights: PathBuf,
    /// Days to use.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub input: ModelInput,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: Option<KindArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub size_fraction: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, value_enum)]
    pub exit_rule: Option<ExitRuleArg>,
    #[arg(long)]
    pub tick_gbx: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: ModelInput,
    /// Grid CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub beta2s: Option<Vec<f64>>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub size_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub exit_rule: Option<ExitRuleArg>,
    #[arg(long)]
    pub tick_gbx: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AucArg {
    Macro,
    Micro,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: ModelInput,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = AucArg::Macro)]
    pub auc: AucArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of `backtest`.
    #[arg(long)]
    pub backtest: PathBuf,
    /// Output directory of `evaluate`, for the daily accuracy boxplot.
    #[arg(long)]
    pub evaluate: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    commands::dispatch(cli)
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}
