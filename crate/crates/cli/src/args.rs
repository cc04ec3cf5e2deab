use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use densindex::mdn::TrainConfig;

/// Granular house-price densities, indices and validation reports.
///
/// Every flag can also be set through an environment variable named
/// `DENSINDEX_<FLAG>`, e.g. `DENSINDEX_SEED=7`.
#[derive(Debug, Parser)]
#[command(name = "densindex", version, propagate_version = true)]
pub struct Cli {
    /// Directory that receives all output files.
    #[arg(long, global = true, env = "DENSINDEX_OUT", default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic market: sales CSV, registry and ground truth.
    Synth(SynthArgs),
    /// Fit an ensemble density model on the full dataset.
    Train(TrainArgs),
    /// Emit density-derived and benchmark indices plus density dumps.
    Index(IndexArgs),
    /// Run validation experiments and write their reports.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, env = "DENSINDEX_SCENARIO", default_value = "standard")]
    pub scenario: String,

    #[arg(long, env = "DENSINDEX_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Override the expected number of sales per cell and week.
    #[arg(long, env = "DENSINDEX_SALES_RATE")]
    pub sales_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Sales CSV.
    #[arg(long, env = "DENSINDEX_DATA")]
    pub data: PathBuf,

    /// Region registry JSON.
    #[arg(long, env = "DENSINDEX_REGISTRY")]
    pub registry: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Base seed; ensemble member i uses seed + i.
    #[arg(long, env = "DENSINDEX_SEED", default_value_t = 0)]
    pub seed: u64,

    #[arg(long, env = "DENSINDEX_ENSEMBLE", default_value_t = 8)]
    pub ensemble: usize,

    #[arg(long, env = "DENSINDEX_COMPONENTS", default_value_t = 8)]
    pub components: usize,

    /// Standard deviation of the per-epoch week perturbation.
    #[arg(long, env = "DENSINDEX_JITTER_WEEKS", default_value_t = 2.0)]
    pub jitter_weeks: f64,

    #[arg(long, env = "DENSINDEX_EPOCHS")]
    pub epochs: Option<usize>,

    #[arg(long, env = "DENSINDEX_HIDDEN")]
    pub hidden: Option<usize>,

    #[arg(long, env = "DENSINDEX_EMBED_DIM")]
    pub embed_dim: Option<usize>,

    #[arg(long, env = "DENSINDEX_BATCH_SIZE")]
    pub batch_size: Option<usize>,

    #[arg(long, env = "DENSINDEX_LEARNING_RATE")]
    pub learning_rate: Option<f64>,

    #[arg(long, env = "DENSINDEX_USE_BEDROOMS")]
    pub use_bedrooms: bool,

    #[arg(long, env = "DENSINDEX_USE_LAND_BAND")]
    pub use_land_band: bool,
}

impl ModelArgs {
    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            components: self.components,
            hidden: self.hidden.unwrap_or(d.hidden),
            embed_dim: self.embed_dim.unwrap_or(d.embed_dim),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            jitter_sd: self.jitter_weeks,
            use_bedrooms: self.use_bedrooms,
            use_land_band: self.use_land_band,
            seed: self.seed,
            ..d
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub input: InputArgs,

    /// Ensemble model written by `train`.
    #[arg(long, env = "DENSINDEX_MODEL")]
    pub model: PathBuf,

    /// Extra quantile indices, in percent (e.g. `20,80`).
    #[arg(long, env = "DENSINDEX_PERCENTILES", value_delimiter = ',')]
    pub percentiles: Vec<f64>,

    /// Last day of the population-weight period (YYYY-MM-DD); defaults to the data end.
    #[arg(long, env = "DENSINDEX_WEIGHTS_CUTOFF")]
    pub weights_cutoff: Option<String>,

    /// Normalize every series to 1 at this date (YYYY-MM-DD).
    #[arg(long, env = "DENSINDEX_BASE_DATE")]
    pub base_date: Option<String>,

    /// Time resolution of the hedonic and repeat-sales regressions.
    #[arg(long, env = "DENSINDEX_BENCHMARK_PERIOD", value_enum, default_value = "month")]
    pub benchmark_period: Period,

    /// Points per weekly density in the dump.
    #[arg(long, env = "DENSINDEX_GRID_POINTS", default_value_t = 200)]
    pub grid_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Period {
    Week,
    Month,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Nll,
    Calibration,
    Persistence,
    Kfold,
    Sparsity,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::Nll,
        Check::Calibration,
        Check::Persistence,
        Check::Kfold,
        Check::Sparsity,
    ];
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub model_args: ModelArgs,

    /// Checks to run; all when omitted.
    #[arg(long, env = "DENSINDEX_CHECKS", value_enum, value_delimiter = ',')]
    pub checks: Vec<Check>,

    /// Full-data model for calibration and persistence; trained when omitted.
    #[arg(long, env = "DENSINDEX_MODEL")]
    pub model: Option<PathBuf>,

    #[arg(long, env = "DENSINDEX_FOLDS", default_value_t = 20)]
    pub folds: usize,

    /// Calibration grid in percent; the nine deciles when omitted.
    #[arg(long, env = "DENSINDEX_PERCENTILES", value_delimiter = ',')]
    pub percentiles: Vec<f64>,

    /// Last day of the population-weight period (YYYY-MM-DD).
    #[arg(long, env = "DENSINDEX_WEIGHTS_CUTOFF")]
    pub weights_cutoff: Option<String>,

    /// Region thinned by the sparsity experiment; the first region with
    /// neighbours when omitted.
    #[arg(long, env = "DENSINDEX_SPARSITY_REGION")]
    pub sparsity_region: Option<String>,

    /// Fraction of the region's sales kept by the sparsity experiment.
    #[arg(long, env = "DENSINDEX_SPARSITY_KEEP", default_value_t = 0.1)]
    pub sparsity_keep: f64,
}
