use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sharprd::bandwidth::BandwidthMethod;
use sharprd::locrand::{StatisticKind, DEFAULT_DRAWS};
use sharprd::rdplot::{Binning, PlotFormat};
use sharprd::window::DEFAULT_THRESHOLD;
use sharprd::KernelSpec;

pub const SEED_ENV: &str = "SHARPRD_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "sharprd",
    version,
    about = "Sharp regression-discontinuity analysis on CSV data"
)]
pub struct Cli {
    /// Worker threads for replications and permutation draws (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Local polynomial estimate with conventional and robust bias-corrected inference.
    Estimate(EstimateArgs),
    /// MSE- or CER-optimal bandwidth with pilot diagnostics.
    Bandwidth(BandwidthArgs),
    /// Randomization inference inside a fixed window.
    Locrand(LocrandArgs),
    /// Covariate-balance window selection.
    Window(WindowArgs),
    /// Covariate balance, density, placebo-cutoff and bandwidth-sensitivity checks.
    Falsify(FalsifyArgs),
    /// Binned-means plot with global polynomial overlay.
    Plot(PlotArgs),
    /// Monte Carlo coverage study from a TOML configuration.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    /// Enumerate when feasible, otherwise draw.
    Auto,
    Exact,
    /// Monte Carlo draws only.
    Mc,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV file with a header row.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Score (running variable) column.
    #[arg(long, default_value = "score")]
    pub score: String,
    /// Outcome column.
    #[arg(long, default_value = "outcome")]
    pub outcome: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub covariates: Vec<String>,
    /// Treatment threshold; units with score >= cutoff are treated.
    #[arg(long, allow_hyphen_values = true)]
    pub cutoff: f64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Local polynomial order.
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Kernel: triangular, uniform or epanechnikov.
    #[arg(long, default_value_t = KernelSpec::Triangular)]
    pub kernel: KernelSpec,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Bias bandwidth as a multiple of h (at least 1).
    #[arg(long, default_value_t = 1.0)]
    pub b_ratio: f64,
}

#[derive(Debug, Args)]
pub struct PermutationArgs {
    /// Test statistic: diff, ks or ranksum.
    #[arg(long, default_value_t = StatisticKind::DiffMeans)]
    pub stat: StatisticKind,
    /// Monte Carlo draws when enumeration is infeasible or not requested.
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    pub draws: u64,
    /// Randomization scheme.
    #[arg(long, value_enum, default_value_t = SchemeArg::Auto)]
    pub scheme: SchemeArg,
    /// Random seed [falls back to $SHARPRD_SEED].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Bandwidth selector used when --h is absent.
    #[arg(long, default_value_t = BandwidthMethod::Mse)]
    pub bandwidth_method: BandwidthMethod,
    /// Fixed main bandwidth.
    #[arg(long)]
    pub h: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Selector: mse or cer.
    #[arg(long, default_value_t = BandwidthMethod::Mse)]
    pub method: BandwidthMethod,
    /// Local polynomial order.
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Kernel: triangular, uniform or epanechnikov.
    #[arg(long, default_value_t = KernelSpec::Triangular)]
    pub kernel: KernelSpec,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct LocrandArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Window bounds `lower,upper` on the score scale.
    #[arg(long, allow_hyphen_values = true, value_name = "LOWER,UPPER")]
    pub window: String,
    #[command(flatten)]
    pub perm: PermutationArgs,
    /// Polynomial order removed from outcomes within each side before testing.
    #[arg(long, default_value_t = 0)]
    pub adjust: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Starting half-width [default: smallest with 10 units per side].
    #[arg(long)]
    pub w_start: Option<f64>,
    /// Half-width step [default: sd(score)/100].
    #[arg(long)]
    pub increment: Option<f64>,
    /// Stop at the first window whose minimum balance p-value is below this.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Scan at most this many windows.
    #[arg(long)]
    pub max_windows: Option<usize>,
    #[command(flatten)]
    pub perm: PermutationArgs,
    /// Also write the p-value-by-window curve as CSV.
    #[arg(long, value_name = "PATH")]
    pub curve: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FalsifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Window `lower,upper` for the binomial test (skipped when absent).
    #[arg(long, allow_hyphen_values = true, value_name = "LOWER,UPPER")]
    pub window: Option<String>,
    /// Treatment probability under the binomial null.
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    /// Comma-separated placebo cutoffs [default: quartiles of each side].
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        value_name = "VALUES"
    )]
    pub placebo: Vec<f64>,
    /// Comma-separated multiples of the MSE bandwidth.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.75,1,1.25,1.5")]
    pub multipliers: Vec<f64>,
    /// Write one CSV table per check into this directory.
    #[arg(long, value_name = "DIR")]
    pub tables_dir: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Bins per side.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Bin layout: even or quantile.
    #[arg(long, default_value = "even")]
    pub binning: Binning,
    /// Order of the global polynomial overlay.
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    /// Output format: svg, json or csv.
    #[arg(long, default_value = "svg")]
    pub format: PlotFormat,
    /// Write the plot here instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file describing the data-generating process and study size.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Random seed [falls back to the config file, then $SHARPRD_SEED].
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}
