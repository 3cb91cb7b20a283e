//! Restricted Bernoulli matrix factorization.
//!
//! A collaborative filtering model that predicts a full probability
//! distribution over a discrete score set for every user/item pair. The mass
//! of the most likely score is a reliability that lets callers trade
//! coverage for accuracy, and the crate ships the tooling to measure that
//! trade-off: threshold-filtered metrics, k-fold random search with a
//! Pareto front over (coverage, 1 - MAE), and a PMF baseline.

pub mod baselines;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod persist;
pub mod scores;
pub mod search;
pub mod seed;
pub mod synthetic;
pub mod train;

pub use baselines::{pmf_fit, pmf_predict, PmfModel};
pub use data::{make_folds, parse_ratings, split, FormatSpec, Partition, Rating, RatingsDataset};
pub use error::{Error, Result};
pub use metrics::{Evaluation, EvaluationReport, Predictor, ThresholdGrid};
pub use model::{
    apply_threshold, log_likelihood, predict, predict_distribution, softmax, FactorModel, Hyperparams,
    PredictionDistribution,
};
pub use scores::ScoreSet;
pub use search::{pareto_front, random_search, sample_candidates, Objectives, SearchSpace};
pub use train::{fit, fit_with, FitOptions};
