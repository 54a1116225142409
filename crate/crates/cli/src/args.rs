use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use histoseg::porosity::Method;
use histoseg::VarianceRule;

#[derive(Debug, Parser)]
#[command(name = "histoseg", version, about = "Histogram segmentation via EM kernel density estimation and scale-space")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the kernel density model to a histogram CSV.
    Kde(KdeArgs),
    /// Split a histogram CSV into classes.
    Threshold(ThresholdArgs),
    /// Run the seeded Cauchy-mixture validation.
    Validate(ValidateArgs),
    /// Estimate mean porosity of a PGM image stack.
    Porosity(PorosityArgs),
    /// Write a synthetic three-phase PGM stack with known porosity.
    Phantom(PhantomArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Corrected,
    AsPrinted,
}

impl From<RuleArg> for VarianceRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Corrected => VarianceRule::Corrected,
            RuleArg::AsPrinted => VarianceRule::AsPrinted,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Kde,
    Kmeans,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Kde => Method::KdeScaleSpace,
            MethodArg::Kmeans => Method::Kmeans,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EmArgs {
    /// EM convergence tolerance on Σ|Δβ|/β.
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
    /// Keep σ² at its initial value.
    #[arg(long)]
    pub fixed_variance: bool,
    #[arg(long, value_enum, default_value_t = RuleArg::Corrected)]
    pub variance_rule: RuleArg,
}

#[derive(Debug, Clone, Args)]
pub struct KdeArgs {
    /// Histogram CSV with header `t,h`.
    pub input: PathBuf,
    /// Model CSV (`t,beta`); metadata goes to the same path with a `.json` extension.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-iteration CSV of residual and σ².
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub classes: usize,
    /// Thresholds JSON.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Step of the scale walk.
    #[arg(long, default_value_t = 0.01)]
    pub dsigma2: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    /// SVG of histogram, model and thresholds.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Per-step CSV of the scale walk.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
    #[arg(long, default_value_t = 1000)]
    pub bins: usize,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub dsigma2: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    /// Receives `summary.json` and `cases.csv`.
    #[arg(short, long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PorosityArgs {
    /// Glob selecting the PGM slices, e.g. `scan/slice_*.pgm`.
    pub stack: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Kde)]
    pub method: MethodArg,
    /// Histogram bins; defaults to min(1024, maxval + 1).
    #[arg(long)]
    pub bins: Option<usize>,
    /// Bins of the porosity histogram.
    #[arg(long, default_value_t = 100)]
    pub porosity_bins: usize,
    #[arg(long, default_value_t = 0.01)]
    pub dsigma2: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    /// Receives `porosity.json`, `porosity_histogram.csv` and `comparison.csv`.
    #[arg(short, long)]
    pub out_dir: PathBuf,
    /// SVG of the intensity histogram with thresholds and reference points.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[command(flatten)]
    pub em: EmArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PhantomArgs {
    #[arg(short, long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub slices: usize,
    /// Void, porous and solid fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.2, 0.5, 0.3])]
    pub fractions: Vec<f64>,
    /// Void, porous and solid mean intensities.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [60.0, 120.0, 180.0])]
    pub means: Vec<f64>,
    #[arg(long, default_value_t = 12.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 255)]
    pub maxval: u16,
    /// Edge of the square blocks assigned to one phase.
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "slice_")]
    pub prefix: String,
}
