use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use r2vfl::dataset::{CsvOptions, LabelColumn};
use r2vfl::model::Activation;
use r2vfl::Variant;

#[derive(Debug, Parser)]
#[command(name = "r2vfl", version, about = "Train, evaluate and compare RVFL-family classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and save it.
    Train(TrainArgs),
    /// Predict labels with a saved model.
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation of one configuration.
    Cv(CvArgs),
    /// Exhaustive grid search with cross-validation.
    Grid(GridArgs),
    /// Grid-searched accuracy of several models over several datasets.
    Bench(BenchArgs),
    /// Friedman, Nemenyi and Wilcoxon tests on an accuracy table.
    #[command(subcommand)]
    Stats(StatsCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Human,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file of numeric features and one label column.
    #[arg(long)]
    pub data: PathBuf,
    /// The first row is a header.
    #[arg(long)]
    pub header: bool,
    /// Label column: "last" or a 0-based index.
    #[arg(long, default_value = "last", value_parser = parse_label_column)]
    pub label_column: LabelColumn,
}

impl DataArgs {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            has_header: self.header,
            label_column: self.label_column,
        }
    }
}

fn parse_label_column(s: &str) -> Result<LabelColumn, String> {
    s.parse().map_err(|e: r2vfl::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: r2vfl::Error| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: r2vfl::Error| e.to_string())
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// rvfl, elm, r2vfl-a or r2vfl-m.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// TOML file with a [model] table; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "hidden")]
    pub hidden_nodes: Option<usize>,
    /// Output-layer regularization parameter.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// RBF width of the weighting kernel (robust variants).
    #[arg(long)]
    pub kernel: Option<f64>,
    /// Huber threshold as a fraction of the class radius (robust variants).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Absolute neighborhood radius for the class probability.
    #[arg(long, conflicts_with = "delta_quantile")]
    pub delta: Option<f64>,
    /// Neighborhood radius as a quantile of pairwise distances.
    #[arg(long)]
    pub delta_quantile: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Where to write the model file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub header: bool,
    /// Label column, if the file has one: "last" or a 0-based index.
    #[arg(long, value_parser = parse_label_column)]
    pub label_column: Option<LabelColumn>,
    /// Write predictions here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// TOML grid (gamma, hidden, kernel, tau, k, seed); missing keys use
    /// the default grids.
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Trace CSV with one row per configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML manifest listing datasets, models and grid overrides.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated variants; overrides the manifest.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    pub models: Option<Vec<Variant>>,
    /// Directory for accuracy.csv and ranks.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

/// Where average ranks come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum RankSource {
    /// The table's "Average Rank" row if it has one, else computed.
    #[default]
    Auto,
    /// Always computed from the accuracies.
    Computed,
    /// The table's "Average Rank" row; an error if there is none.
    Reported,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Accuracy table: header "dataset,<model>...", one row per dataset,
    /// optionally followed by "Average Accuracy" and "Average Rank" rows.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub ranks: RankSource,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    Friedman {
        #[command(flatten)]
        table: TableArgs,
        /// F critical value; when given, the decision is reported.
        #[arg(long)]
        f_critical: Option<f64>,
    },
    Nemenyi {
        #[command(flatten)]
        table: TableArgs,
        /// Defaults to the built-in alpha = 0.05 value for the model count.
        #[arg(long)]
        q_alpha: Option<f64>,
        /// Model compared against the others; defaults to the last column.
        #[arg(long)]
        reference: Option<String>,
    },
    Wilcoxon {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}
