//! Multi-objective random hyperparameter search.
//!
//! Each candidate is scored by k-fold cross-validation on two objectives to
//! be maximized, the grid-averaged coverage and `1 - MAE`, and the
//! non-dominated candidates form the Pareto front.

use std::io::Write;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::baselines::pmf_fit;
use crate::data::{make_folds, FoldAssignment, RatingsDataset};
use crate::error::{Error, Result};
use crate::metrics::{Evaluation, ThresholdGrid};
use crate::model::Hyperparams;
use crate::seed::{self, derive_seed};
use crate::train::{fit_with, FitOptions};

const SAMPLE_STREAM: u64 = u64::MAX;
const FOLD_STREAM: u64 = u64::MAX - 1;

/// Finite candidate grids per hyperparameter plus the fraction of their
/// cartesian product to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub k: Vec<usize>,
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
    pub m: Vec<usize>,
    #[serde(default = "full_fraction")]
    pub search_fraction: f64,
}

fn full_fraction() -> f64 {
    1.0
}

impl SearchSpace {
    /// The grids used for MovieLens and FilmTrust.
    pub fn standard() -> Self {
        Self {
            k: vec![2, 4, 6, 8, 10],
            gamma: vec![0.01, 0.05, 0.10, 0.15, 0.20],
            eta: vec![0.001, 0.002, 0.003, 0.004, 0.005],
            m: vec![25, 50, 75, 100],
            search_fraction: 1.0,
        }
    }

    /// Coarser grids for catalogues with many items; 75% of the product is sampled.
    pub fn large_catalogue() -> Self {
        Self {
            k: vec![2, 4, 6, 8, 10],
            gamma: vec![0.0001, 0.001, 0.01, 0.1],
            eta: vec![0.0001, 0.0002, 0.0003, 0.0004, 0.0005],
            m: vec![25, 50, 75, 100],
            search_fraction: 0.75,
        }
    }

    pub fn size(&self) -> usize {
        self.k.len() * self.gamma.len() * self.eta.len() * self.m.len()
    }

    /// Number of candidates drawn: `ceil(search_fraction * size)`.
    pub fn n_samples(&self) -> usize {
        let raw = self.search_fraction * self.size() as f64;
        // absorb representation error such as 0.1 * 30 = 3.0000000000000004
        ((raw - 1e-9).ceil() as usize).clamp(1, self.size())
    }

    pub fn validate(&self) -> Result<()> {
        fn distinct<T: PartialEq>(name: &str, xs: &[T]) -> Result<()> {
            if xs.is_empty() {
                return Err(Error::InvalidArgument(format!("search space: {name} grid is empty")));
            }
            for (n, x) in xs.iter().enumerate() {
                if xs[..n].contains(x) {
                    return Err(Error::InvalidArgument(format!(
                        "search space: {name} grid has repeated values"
                    )));
                }
            }
            Ok(())
        }
        distinct("k", &self.k)?;
        distinct("gamma", &self.gamma)?;
        distinct("eta", &self.eta)?;
        distinct("m", &self.m)?;
        if !(self.search_fraction > 0.0 && self.search_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "search_fraction must lie in (0, 1], got {}",
                self.search_fraction
            )));
        }
        if self.search_fraction * (self.size() as f64) < 1.0 - 1e-9 {
            return Err(Error::InvalidArgument(
                "search_fraction selects no candidate".into(),
            ));
        }
        for c in self.all() {
            c.with_seed(0).validate()?;
        }
        Ok(())
    }

    /// The full product in `k`, `gamma`, `eta`, `m` nesting order.
    pub fn all(&self) -> Vec<Candidate> {
        let mut out = Vec::with_capacity(self.size());
        for &k in &self.k {
            for &gamma in &self.gamma {
                for &eta in &self.eta {
                    for &m in &self.m {
                        out.push(Candidate { k, gamma, eta, m });
                    }
                }
            }
        }
        out
    }
}

/// A hyperparameter tuple without its seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub k: usize,
    pub gamma: f64,
    pub eta: f64,
    pub m: usize,
}

impl Candidate {
    pub fn with_seed(&self, seed: u64) -> Hyperparams {
        Hyperparams {
            k: self.k,
            gamma: self.gamma,
            eta: self.eta,
            m: self.m,
            seed,
        }
    }
}

/// `ceil(search_fraction * |space|)` distinct tuples drawn uniformly without
/// replacement, returned in product order.
pub fn sample_candidates(space: &SearchSpace, seed: u64) -> Result<Vec<Candidate>> {
    space.validate()?;
    let all = space.all();
    let n = space.n_samples();
    if n == all.len() {
        return Ok(all);
    }
    let mut picked = index::sample(&mut seed::rng(seed), all.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|j| all[j]).collect())
}

/// Both objectives are maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub coverage: f64,
    pub one_minus_mae: f64,
}

impl Objectives {
    /// Weak dominance in both objectives, strict in at least one.
    pub fn dominates(&self, other: &Objectives) -> bool {
        self.coverage >= other.coverage
            && self.one_minus_mae >= other.one_minus_mae
            && (self.coverage > other.coverage || self.one_minus_mae > other.one_minus_mae)
    }
}

/// Indices of the non-dominated points, sorted by coverage ascending (then
/// by `1 - MAE` descending, then index). Points with identical objectives
/// are all kept. Points with a NaN objective never make the front.
pub fn pareto_front(points: &[Objectives]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len())
        .filter(|&j| !points[j].coverage.is_nan() && !points[j].one_minus_mae.is_nan())
        .collect();
    // coverage descending, quality descending
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pb.coverage
            .total_cmp(&pa.coverage)
            .then_with(|| pb.one_minus_mae.total_cmp(&pa.one_minus_mae))
            .then_with(|| a.cmp(&b))
    });

    let mut front = Vec::new();
    let mut best_quality = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let coverage = points[order[start]].coverage;
        let mut end = start;
        while end < order.len() && points[order[end]].coverage == coverage {
            end += 1;
        }
        // Within a coverage tie only the top quality survives; it is on the
        // front iff no point of larger coverage reaches its quality.
        let top = points[order[start]].one_minus_mae;
        if top > best_quality {
            front.extend(
                order[start..end]
                    .iter()
                    .copied()
                    .take_while(|&j| points[j].one_minus_mae == top),
            );
            best_quality = top;
        }
        start = end;
    }

    front.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.coverage
            .total_cmp(&pb.coverage)
            .then_with(|| pb.one_minus_mae.total_cmp(&pa.one_minus_mae))
            .then_with(|| a.cmp(&b))
    });
    front
}

/// Which model family a search fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Resbemf,
    Pmf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluatedCandidate {
    pub candidate: Candidate,
    /// Seed used for every fold's fit.
    pub seed: u64,
    /// Means of `per_fold`.
    pub objectives: Objectives,
    pub per_fold: Vec<Objectives>,
}

/// Fits on `train \ fold_j` and scores the grid aggregate on `fold_j`, for
/// every fold.
pub fn cross_validate(
    kind: ModelKind,
    hp: &Hyperparams,
    dataset: &RatingsDataset,
    folds: &FoldAssignment,
    grid: &ThresholdGrid,
) -> Result<EvaluatedCandidate> {
    let mut per_fold = Vec::with_capacity(folds.n_folds());
    for fold in 0..folds.n_folds() {
        let train = folds.training(dataset, fold);
        let held_out = folds.held_out(dataset, fold);
        let evaluation = match kind {
            ModelKind::Resbemf => {
                let (model, _) = fit_with(dataset, &train, hp, &FitOptions::default())?;
                Evaluation::new(&model, dataset, &held_out)
            }
            ModelKind::Pmf => {
                let model = pmf_fit(dataset, &train, hp)?;
                Evaluation::new(&model, dataset, &held_out)
            }
        };
        let agg = evaluation.aggregate(grid).ok_or_else(|| {
            Error::InvalidArgument(format!("fold {fold} has no ratings to evaluate"))
        })?;
        per_fold.push(Objectives {
            coverage: agg.coverage,
            one_minus_mae: agg.one_minus_mae,
        });
    }
    let n = per_fold.len() as f64;
    let objectives = Objectives {
        coverage: per_fold.iter().map(|o| o.coverage).sum::<f64>() / n,
        one_minus_mae: per_fold.iter().map(|o| o.one_minus_mae).sum::<f64>() / n,
    };
    Ok(EvaluatedCandidate {
        candidate: Candidate {
            k: hp.k,
            gamma: hp.gamma,
            eta: hp.eta,
            m: hp.m,
        },
        seed: hp.seed,
        objectives,
        per_fold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CandidateOutcome {
    Evaluated(EvaluatedCandidate),
    Failed {
        candidate: Candidate,
        seed: u64,
        error: String,
    },
}

impl CandidateOutcome {
    pub fn evaluated(&self) -> Option<&EvaluatedCandidate> {
        match self {
            CandidateOutcome::Evaluated(e) => Some(e),
            CandidateOutcome::Failed { .. } => None,
        }
    }

    pub fn candidate(&self) -> &Candidate {
        match self {
            CandidateOutcome::Evaluated(e) => &e.candidate,
            CandidateOutcome::Failed { candidate, .. } => candidate,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            CandidateOutcome::Evaluated(e) => e.seed,
            CandidateOutcome::Failed { seed, .. } => *seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub kind: ModelKind,
    pub n_folds: usize,
    pub grid: ThresholdGrid,
    pub seed: u64,
    /// Candidates evaluated concurrently; `1` runs sequentially.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    /// One entry per sampled candidate, in sampling order.
    pub candidates: Vec<CandidateOutcome>,
    /// Positions in `candidates` of the Pareto-optimal evaluated candidates,
    /// by coverage ascending.
    pub front: Vec<usize>,
}

impl SearchOutcome {
    pub fn n_failed(&self) -> usize {
        self.candidates.iter().filter(|c| c.evaluated().is_none()).count()
    }

    /// CSV of every candidate: hyperparameters, per-fold and mean objectives,
    /// front flag.
    pub fn write_candidates_csv<W: Write>(&self, out: W) -> Result<()> {
        let positions: Vec<usize> = (0..self.candidates.len()).collect();
        self.write_rows(out, &positions)
    }

    /// CSV of the front members only, coverage ascending.
    pub fn write_front_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_rows(out, &self.front)
    }

    fn n_folds(&self) -> usize {
        self.candidates
            .iter()
            .filter_map(|c| c.evaluated())
            .map(|e| e.per_fold.len())
            .max()
            .unwrap_or(0)
    }

    fn write_rows<W: Write>(&self, out: W, positions: &[usize]) -> Result<()> {
        let n_folds = self.n_folds();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["index", "k", "gamma", "eta", "m", "seed", "status"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for f in 0..n_folds {
            header.push(format!("fold{f}_coverage"));
            header.push(format!("fold{f}_one_minus_mae"));
        }
        header.extend(["coverage", "one_minus_mae", "front"].map(String::from));
        w.write_record(&header)?;

        for &pos in positions {
            let outcome = &self.candidates[pos];
            let c = outcome.candidate();
            let mut row = vec![
                pos.to_string(),
                c.k.to_string(),
                c.gamma.to_string(),
                c.eta.to_string(),
                c.m.to_string(),
                outcome.seed().to_string(),
            ];
            match outcome {
                CandidateOutcome::Evaluated(e) => {
                    row.push("ok".into());
                    for f in 0..n_folds {
                        let o = e.per_fold.get(f);
                        row.push(o.map(|o| o.coverage.to_string()).unwrap_or_default());
                        row.push(o.map(|o| o.one_minus_mae.to_string()).unwrap_or_default());
                    }
                    row.push(e.objectives.coverage.to_string());
                    row.push(e.objectives.one_minus_mae.to_string());
                }
                CandidateOutcome::Failed { .. } => {
                    row.push("failed".into());
                    row.extend(std::iter::repeat_n(String::new(), 2 * n_folds + 2));
                }
            }
            row.push(if self.front.contains(&pos) { "1" } else { "0" }.into());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples candidates, cross-validates each with its own derived seed and
/// extracts the Pareto front. Deterministic in `config.seed` regardless of
/// `config.threads`.
pub fn random_search(space: &SearchSpace, dataset: &RatingsDataset, config: &SearchConfig) -> Result<SearchOutcome> {
    let candidates = sample_candidates(space, derive_seed(config.seed, SAMPLE_STREAM))?;
    let folds = make_folds(dataset, config.n_folds, derive_seed(config.seed, FOLD_STREAM))?;
    if config.threads == 0 {
        return Err(Error::InvalidArgument("threads must be at least 1".into()));
    }

    let evaluate = |(j, c): (usize, &Candidate)| -> CandidateOutcome {
        let hp = c.with_seed(derive_seed(config.seed, j as u64));
        match cross_validate(config.kind, &hp, dataset, &folds, &config.grid) {
            Ok(e) => CandidateOutcome::Evaluated(e),
            Err(err) => {
                log::warn!("candidate {j} ({c:?}) failed: {err}");
                CandidateOutcome::Failed {
                    candidate: *c,
                    seed: hp.seed,
                    error: err.to_string(),
                }
            }
        }
    };

    let outcomes: Vec<CandidateOutcome> = run_indexed(&candidates, config.threads, evaluate)?;
    collect_outcome(outcomes)
}

fn collect_outcome(candidates: Vec<CandidateOutcome>) -> Result<SearchOutcome> {
    let evaluated: Vec<(usize, Objectives)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(j, c)| c.evaluated().map(|e| (j, e.objectives)))
        .collect();
    if evaluated.is_empty() {
        return Err(Error::AllCandidatesFailed(candidates.len()));
    }
    let points: Vec<Objectives> = evaluated.iter().map(|&(_, o)| o).collect();
    let front = pareto_front(&points)
        .into_iter()
        .map(|p| evaluated[p].0)
        .collect();
    Ok(SearchOutcome { candidates, front })
}

#[cfg(feature = "parallel")]
fn run_indexed<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn((usize, &T)) -> R + Sync,
{
    use rayon::prelude::*;
    if threads <= 1 {
        return Ok(items.iter().enumerate().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(|| items.par_iter().enumerate().map(&f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_indexed<T, R, F>(items: &[T], _threads: usize, f: F) -> Result<Vec<R>>
where
    F: Fn((usize, &T)) -> R,
{
    Ok(items.iter().enumerate().map(f).collect())
}
