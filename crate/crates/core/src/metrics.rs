//! Reliability-parameterized quality metrics.
//!
//! For a reliability threshold `theta`, `R_hat_u(theta)` is the set of a
//! user's test items whose prediction reliability is at least `theta`. MAE
//! and accuracy average first within each user over `R_hat_u(theta)` and then
//! across users; users with an empty filtered set are left out of the outer
//! mean, and a metric with no contributing user is absent (`None`).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::baselines::{clamp_prediction, pmf_predict, PmfModel, PMF_RELIABILITY};
use crate::data::{Rating, RatingsDataset};
use crate::error::{Error, Result};
use crate::model::{check_theta, predict_distribution, FactorModel, PredictionDistribution};
use crate::scores::ScoreSet;

/// What a model says about one (user, item) pair, reduced to the numbers the
/// metrics need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointPrediction {
    /// Value compared against the rating in MAE.
    pub value: f64,
    /// Discrete class compared against the rating in accuracy.
    pub class: f64,
    pub reliability: f64,
    /// Primary ranking criterion (mode of the distribution).
    pub mode: f64,
    /// Ranking tie-breaker (mean of the distribution).
    pub mean: f64,
    pub cold_start: bool,
}

impl PointPrediction {
    pub fn from_distribution(dist: &PredictionDistribution, scores: &ScoreSet, cold_start: bool) -> Self {
        let mode = dist.mode_value(scores);
        Self {
            value: mode,
            class: mode,
            reliability: dist.reliability,
            mode,
            mean: dist.mean,
            cold_start,
        }
    }
}

pub trait Predictor {
    fn score_set(&self) -> &ScoreSet;

    /// Prediction for external identifiers. Unknown users or items yield the
    /// model's cold-start fallback with `cold_start` set.
    fn predict_pair(&self, user: &str, item: &str) -> PointPrediction;
}

impl Predictor for FactorModel {
    fn score_set(&self) -> &ScoreSet {
        FactorModel::score_set(self)
    }

    /// Cold-start pairs get the uniform distribution (reliability `1/d`).
    fn predict_pair(&self, user: &str, item: &str) -> PointPrediction {
        match self.resolve(user, item) {
            Ok((u, i)) => {
                let dist = predict_distribution(self, u, i).expect("resolved indices are in range");
                PointPrediction::from_distribution(&dist, self.score_set(), false)
            }
            Err(_) => {
                let dist = PredictionDistribution::uniform(self.score_set());
                PointPrediction::from_distribution(&dist, self.score_set(), true)
            }
        }
    }
}

impl Predictor for PmfModel {
    fn score_set(&self) -> &ScoreSet {
        PmfModel::score_set(self)
    }

    /// Cold-start pairs behave like all-zero factors (the minimum score).
    fn predict_pair(&self, user: &str, item: &str) -> PointPrediction {
        let known = self.user_index(user).zip(self.item_index(item));
        let pred = match known {
            Some((u, i)) => pmf_predict(self, u, i).expect("resolved indices are in range"),
            None => clamp_prediction(0.0, self.score_set()),
        };
        PointPrediction {
            value: pred.value,
            class: pred.class,
            reliability: PMF_RELIABILITY,
            mode: pred.class,
            mean: pred.value,
            cold_start: known.is_none(),
        }
    }
}

/// Ordering key for top-N lists: higher mode first, then higher mean, then
/// lower item index. `Ord` sorts in ranking order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingKey {
    pub mode: f64,
    pub mean: f64,
    pub item: usize,
}

impl Eq for RankingKey {}

impl Ord for RankingKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .mode
            .total_cmp(&self.mode)
            .then_with(|| other.mean.total_cmp(&self.mean))
            .then_with(|| self.item.cmp(&other.item))
    }
}

impl PartialOrd for RankingKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn ranking_key(dist: &PredictionDistribution, scores: &ScoreSet, item: usize) -> RankingKey {
    RankingKey {
        mode: dist.mode_value(scores),
        mean: dist.mean,
        item,
    }
}

/// `theta_k = k / (N - 1)` for `k = 0..N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdGrid {
    thetas: Vec<f64>,
}

impl ThresholdGrid {
    pub const DEFAULT_POINTS: usize = 20;

    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidArgument(format!(
                "threshold grid needs at least 2 points, got {n_points}"
            )));
        }
        let last = (n_points - 1) as f64;
        Ok(Self {
            thetas: (0..n_points).map(|k| k as f64 / last).collect(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self::new(Self::DEFAULT_POINTS).expect("default grid is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalEntry {
    /// Item index used for deterministic ranking ties.
    pub item: usize,
    pub rating: f64,
    pub prediction: PointPrediction,
}

/// Test-set predictions grouped by user, computed once and reused across
/// thresholds.
#[derive(Debug, Clone)]
pub struct Evaluation {
    scores: ScoreSet,
    users: Vec<Vec<EvalEntry>>,
}

impl Evaluation {
    /// Predicts every rating in `test` (indices into `dataset`).
    pub fn new<P: Predictor + ?Sized>(predictor: &P, dataset: &RatingsDataset, test: &[Rating]) -> Self {
        let mut groups: BTreeMap<usize, Vec<EvalEntry>> = BTreeMap::new();
        for r in test {
            let prediction = predictor.predict_pair(dataset.user_id(r.user), dataset.item_id(r.item));
            groups.entry(r.user).or_default().push(EvalEntry {
                item: r.item,
                rating: r.value,
                prediction,
            });
        }
        Self {
            scores: predictor.score_set().clone(),
            users: groups.into_values().collect(),
        }
    }

    pub fn from_entries(scores: ScoreSet, users: Vec<Vec<EvalEntry>>) -> Self {
        Self {
            scores,
            users: users.into_iter().filter(|u| !u.is_empty()).collect(),
        }
    }

    pub fn users(&self) -> &[Vec<EvalEntry>] {
        &self.users
    }

    pub fn n_test(&self) -> usize {
        self.users.iter().map(Vec::len).sum()
    }

    pub fn cold_start_count(&self) -> usize {
        self.users
            .iter()
            .flatten()
            .filter(|e| e.prediction.cold_start)
            .count()
    }

    fn per_user_mean(&self, theta: f64, term: impl Fn(&EvalEntry) -> f64) -> Option<f64> {
        let mut total = 0.0;
        let mut counted = 0usize;
        for entries in &self.users {
            let (sum, n) = entries
                .iter()
                .filter(|e| e.prediction.reliability >= theta)
                .fold((0.0, 0usize), |(s, n), e| (s + term(e), n + 1));
            if n > 0 {
                total += sum / n as f64;
                counted += 1;
            }
        }
        (counted > 0).then(|| total / counted as f64)
    }

    /// Normalized MAE over predictions with reliability `>= theta`.
    pub fn mae_at(&self, theta: f64) -> Option<f64> {
        let range = self.scores.range();
        self.per_user_mean(theta, |e| (e.rating - e.prediction.value).abs() / range)
    }

    pub fn accuracy_at(&self, theta: f64) -> Option<f64> {
        self.per_user_mean(theta, |e| if e.rating == e.prediction.class { 1.0 } else { 0.0 })
    }

    /// Mean over users of the fraction of their test items that clear `theta`.
    pub fn coverage_at(&self, theta: f64) -> Option<f64> {
        if self.users.is_empty() {
            return None;
        }
        let total: f64 = self
            .users
            .iter()
            .map(|entries| {
                let passed = entries.iter().filter(|e| e.prediction.reliability >= theta).count();
                passed as f64 / entries.len() as f64
            })
            .sum();
        Some(total / self.users.len() as f64)
    }

    pub fn n_predicted(&self, theta: f64) -> usize {
        self.users
            .iter()
            .flatten()
            .filter(|e| e.prediction.reliability >= theta)
            .count()
    }

    /// Mean average precision at `n_top`. Each user's test items clearing
    /// `theta` are ranked by [`RankingKey`]; an item is relevant when its
    /// rating is at least `tau`. Users with nothing to rank are skipped.
    pub fn map_at(&self, tau: f64, n_top: usize, theta: f64) -> Option<f64> {
        let mut total = 0.0;
        let mut counted = 0usize;
        for entries in &self.users {
            let mut ranked: Vec<(RankingKey, bool)> = entries
                .iter()
                .filter(|e| e.prediction.reliability >= theta)
                .map(|e| {
                    let key = RankingKey {
                        mode: e.prediction.mode,
                        mean: e.prediction.mean,
                        item: e.item,
                    };
                    (key, e.rating >= tau)
                })
                .collect();
            if ranked.is_empty() {
                continue;
            }
            ranked.sort_by_key(|a| a.0);
            total += average_precision(ranked.iter().take(n_top).map(|&(_, rel)| rel));
            counted += 1;
        }
        (counted > 0).then(|| total / counted as f64)
    }

    /// Averages `1 - MAE` and coverage over the grid. A grid point with no
    /// MAE reuses the last defined value (the first defined value for leading
    /// gaps); the result is `None` when MAE is undefined everywhere.
    pub fn aggregate(&self, grid: &ThresholdGrid) -> Option<Aggregate> {
        let maes: Vec<Option<f64>> = grid.thetas().iter().map(|&t| self.mae_at(t)).collect();
        let first = maes.iter().flatten().next().copied()?;
        let mut carried = first;
        let mut quality = 0.0;
        for m in &maes {
            if let Some(v) = m {
                carried = *v;
            }
            quality += 1.0 - carried;
        }
        let coverage: f64 = grid
            .thetas()
            .iter()
            .map(|&t| self.coverage_at(t).unwrap_or(0.0))
            .sum();
        let n = grid.n_points() as f64;
        Some(Aggregate {
            one_minus_mae: quality / n,
            coverage: coverage / n,
        })
    }

    pub fn report(&self, grid: &ThresholdGrid, ranking: RankingParams) -> EvaluationReport {
        let rows = grid
            .thetas()
            .iter()
            .map(|&theta| ThetaRow {
                theta,
                mae: self.mae_at(theta),
                accuracy: self.accuracy_at(theta),
                coverage: self.coverage_at(theta),
                n_predicted: self.n_predicted(theta),
                map: self.map_at(ranking.tau, ranking.n_top, theta),
            })
            .collect();
        EvaluationReport {
            rows,
            aggregate: self.aggregate(grid),
            ranking: RankingSummary {
                map: self.map_at(ranking.tau, ranking.n_top, ranking.theta),
                n_top: ranking.n_top,
                relevance_threshold: ranking.tau,
                theta: ranking.theta,
            },
            n_test_ratings: self.n_test(),
            n_users: self.users.len(),
            n_cold_start: self.cold_start_count(),
        }
    }
}

/// `(1 / hits) * sum_k precision@k * rel(k)` over the ranked relevance flags.
fn average_precision(relevance: impl Iterator<Item = bool>) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, rel) in relevance.enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub one_minus_mae: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingParams {
    pub tau: f64,
    pub n_top: usize,
    /// Reliability threshold used for the headline mAP.
    pub theta: f64,
}

impl RankingParams {
    pub const DEFAULT_TOP_N: usize = 10;

    /// `n_top = 10`, `tau` at the midpoint of the score range, `theta = 0`.
    pub fn defaults_for(scores: &ScoreSet) -> Self {
        Self {
            tau: 0.5 * (scores.min() + scores.max()),
            n_top: Self::DEFAULT_TOP_N,
            theta: 0.0,
        }
    }

    pub fn validate(&self, scores: &ScoreSet) -> Result<()> {
        if self.n_top < 1 {
            return Err(Error::InvalidArgument("top-N must be at least 1".into()));
        }
        if !(self.tau >= scores.min() && self.tau <= scores.max()) {
            return Err(Error::InvalidArgument(format!(
                "relevance threshold {} outside the score range [{}, {}]",
                self.tau,
                scores.min(),
                scores.max()
            )));
        }
        check_theta(self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaRow {
    pub theta: f64,
    pub mae: Option<f64>,
    pub accuracy: Option<f64>,
    pub coverage: Option<f64>,
    pub n_predicted: usize,
    pub map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingSummary {
    pub map: Option<f64>,
    pub n_top: usize,
    pub relevance_threshold: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub rows: Vec<ThetaRow>,
    pub aggregate: Option<Aggregate>,
    pub ranking: RankingSummary,
    pub n_test_ratings: usize,
    pub n_users: usize,
    pub n_cold_start: usize,
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl EvaluationReport {
    /// `theta,mae,accuracy,coverage,n_predicted`, six decimals, absent
    /// values as empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "mae", "accuracy", "coverage", "n_predicted"])?;
        for row in &self.rows {
            w.write_record([
                format!("{:.6}", row.theta),
                cell(row.mae),
                cell(row.accuracy),
                cell(row.coverage),
                row.n_predicted.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_ranking(tau: f64, n_top: usize, theta: f64, scores: &ScoreSet) -> Result<()> {
    RankingParams { tau, n_top, theta }.validate(scores)
}

pub fn mae_at<P: Predictor + ?Sized>(
    predictor: &P,
    dataset: &RatingsDataset,
    test: &[Rating],
    theta: f64,
) -> Result<Option<f64>> {
    check_theta(theta)?;
    Ok(Evaluation::new(predictor, dataset, test).mae_at(theta))
}

pub fn accuracy_at<P: Predictor + ?Sized>(
    predictor: &P,
    dataset: &RatingsDataset,
    test: &[Rating],
    theta: f64,
) -> Result<Option<f64>> {
    check_theta(theta)?;
    Ok(Evaluation::new(predictor, dataset, test).accuracy_at(theta))
}

pub fn coverage_at<P: Predictor + ?Sized>(
    predictor: &P,
    dataset: &RatingsDataset,
    test: &[Rating],
    theta: f64,
) -> Result<Option<f64>> {
    check_theta(theta)?;
    Ok(Evaluation::new(predictor, dataset, test).coverage_at(theta))
}

pub fn map_at<P: Predictor + ?Sized>(
    predictor: &P,
    dataset: &RatingsDataset,
    test: &[Rating],
    tau: f64,
    n_top: usize,
    theta: f64,
) -> Result<Option<f64>> {
    check_ranking(tau, n_top, theta, predictor.score_set())?;
    Ok(Evaluation::new(predictor, dataset, test).map_at(tau, n_top, theta))
}

pub fn aggregate<P: Predictor + ?Sized>(
    predictor: &P,
    dataset: &RatingsDataset,
    test: &[Rating],
    grid: &ThresholdGrid,
) -> Option<Aggregate> {
    Evaluation::new(predictor, dataset, test).aggregate(grid)
}
