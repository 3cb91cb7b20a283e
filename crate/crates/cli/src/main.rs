use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod input;
mod svg;

/// Restricted Bernoulli matrix factorization experiments.
#[derive(Debug, Parser)]
#[command(name = "resbemf", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every subcommand. Each one overrides the matching
/// field of `--config`.
#[derive(Debug, Args, Default)]
pub struct Shared {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Ratings file (user, item, rating[, ...] per line)
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Held-out ratings file
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// Input layout preset
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Field separator: tab, comma, whitespace or a literal string
    #[arg(long, global = true)]
    pub delimiter: Option<String>,
    /// Skip the first non-empty line
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub header: Option<bool>,
    /// Zero-based user,item,rating column positions
    #[arg(long, global = true, value_delimiter = ',')]
    pub columns: Option<Vec<usize>>,
    /// Explicit score set, e.g. 0.5,1,1.5,2,2.5,3,3.5,4
    #[arg(long, global = true, value_delimiter = ',')]
    pub scores: Option<Vec<f64>>,
    /// Seed for initialisation, splits, folds and candidate sampling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on the count
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for written files (default: current directory)
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Number of reliability thresholds in [0, 1]
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    /// Length of the ranked list for mAP
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    /// Relevance threshold for mAP, in score units
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Reliability threshold for predictions and mAP
    #[arg(long, global = true)]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Tab separated, e.g. MovieLens u.data
    Tsv,
    /// Comma separated
    Csv,
    /// Runs of spaces or tabs
    Whitespace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelType {
    Resbemf,
    Pmf,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model_type: Option<ModelType>,
    /// Latent dimensionality
    #[arg(long)]
    pub k: Option<usize>,
    /// L2 regularization
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Learning rate
    #[arg(long)]
    pub eta: Option<f64>,
    /// Epochs
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print dataset statistics as JSON
    Stats,
    /// Tag a random test partition and write train/test files
    Split {
        /// Fraction of ratings tagged as test (default 0.2)
        #[arg(long)]
        test_fraction: Option<f64>,
        /// Also assign the train ratings to this many folds
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Train a model on the input ratings
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        /// Model file to write (default: <out-dir>/model.json)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict (user, item) pairs as JSON lines
    Predict {
        /// Model file written by `fit`
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, requires = "item")]
        user: Option<String>,
        #[arg(long, requires = "user")]
        item: Option<String>,
        /// File of user, item pairs in the input format
        #[arg(long, conflicts_with = "user")]
        pairs: Option<PathBuf>,
    },
    /// Reliability-filtered metrics of a model on test ratings
    Evaluate {
        /// Model file written by `fit`
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Random search with k-fold cross-validation and Pareto front export
    Search {
        /// Search space JSON (lists for k, gamma, eta, m and search_fraction)
        #[arg(long)]
        space: Option<PathBuf>,
        /// Cross-validation folds (default 5)
        #[arg(long)]
        n_folds: Option<usize>,
        #[arg(long, value_enum)]
        model_type: Option<ModelType>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
