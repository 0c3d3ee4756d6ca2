use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "loadcast", version, about = "Long-horizon smart-meter demand forecasting with kernel methods")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw half-hourly readings into a processed dataset.
    Preprocess(PreprocessArgs),
    /// Generate a synthetic processed dataset.
    Synth(SynthArgs),
    /// Select λ on a validation split, refit and save a model.
    Train(TrainArgs),
    /// Predict demand with a saved model.
    Forecast(ForecastArgs),
    /// Score forecasts against a dataset.
    Evaluate(EvaluateArgs),
    /// Compare all kernel presets under KRR with multi-task OKL.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw readings: `meter_id code value` per line, whitespace or comma separated.
    #[arg(long)]
    pub raw: PathBuf,
    /// CSV `meter_id,group`; unlisted meters are Others.
    #[arg(long)]
    pub groups: PathBuf,
    /// One ISO date per line; listed dates get their own day type.
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    /// `YYYY-MM-DD start|end` lines replacing the built-in transitions of those years.
    #[arg(long)]
    pub dst: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Total meters, split evenly over Residential, SME and Others.
    #[arg(long, default_value_t = 60)]
    pub meters: usize,
    /// Explicit `residential,sme,others` counts; overrides --meters.
    #[arg(long, value_delimiter = ',')]
    pub group_sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 540)]
    pub days: usize,
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub missing_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    pub weight_jitter: f64,
    /// First day, ISO date.
    #[arg(long, default_value = "2009-07-14")]
    pub start: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 365)]
    pub train_days: usize,
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    /// Comma-separated λ values; defaults to 13 log-spaced points in [1e-4, 1e2].
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("kernel_choice").required(true).args(["kernel", "preset"])))]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output model directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Kernel expression over kt, kd, kc, e.g. `kd * kt * kc`.
    #[arg(long)]
    pub kernel: Option<String>,
    /// am1, am2, sam1, sam2, mm1 or mm2.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value = "krr")]
    pub method: String,
    /// Rank of the output kernel (okl only).
    #[arg(long)]
    pub rank: Option<usize>,
    /// `all` or comma-separated groups.
    #[arg(long, default_value = "all")]
    pub group: String,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("query").required(true).args(["dataset", "slots"])))]
pub struct ForecastArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Forecast the slots of this dataset selected by --range.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `test` (the model's recorded split), `fit` (train and validation) or `all`.
    #[arg(long, default_value = "test", requires = "dataset")]
    pub range: String,
    /// Query slots in `slots.csv` format.
    #[arg(long)]
    pub slots: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Append the per-slot sum over meters as meter `__total__`.
    #[arg(long)]
    pub aggregate: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Forecast CSV `slot_index,meter_id,forecast`.
    #[arg(long)]
    pub forecast: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Groups to report, from all, Residential, SME, Others.
    #[arg(long, value_delimiter = ',', default_value = "all,Residential,SME,Others")]
    pub groups: Vec<String>,
    /// Output directory for report.csv and report.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for bench.csv and bench.txt.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Rank cap of the Residential ∪ Others OKL model.
    #[arg(long, default_value_t = 200)]
    pub residential_rank: usize,
    /// Rank of the SME OKL model; full rank when omitted.
    #[arg(long)]
    pub sme_rank: Option<usize>,
}
