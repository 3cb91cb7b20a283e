//! Semi-batch gradient ascent for [`FactorModel`].
//!
//! One epoch runs two phases. Phase A visits every user, accumulates the
//! gradient of all of that user's ratings against the current (frozen) item
//! factors and then moves `P_u` by `eta` times the accumulated gradient.
//! Phase B does the same for every item against the freshly updated user
//! factors. Within a phase each row only reads the other tensor, so rows may
//! be processed in parallel without changing the result.

use rand::Rng;
use serde::Serialize;

use crate::data::{Rating, RatingsDataset};
use crate::error::{Error, Result};
use crate::model::{accumulate_rating, training_objective, FactorModel, Hyperparams};
use crate::scores::ScoreSet;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    /// Worker threads for the per-row phases; `1` runs strictly sequentially.
    pub threads: usize,
    /// Evaluate the training objective after every epoch.
    pub track_objective: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            threads: 1,
            track_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochTrace {
    pub epoch: usize,
    /// Ratings visited in the user phase.
    pub user_phase_ratings: usize,
    /// Ratings visited in the item phase.
    pub item_phase_ratings: usize,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct FitTrace {
    pub initial_objective: Option<f64>,
    pub epochs: Vec<EpochTrace>,
}

/// Compressed adjacency: the `(other index, score index)` pairs of each row.
struct Adjacency {
    offsets: Vec<usize>,
    entries: Vec<(usize, usize)>,
}

impl Adjacency {
    fn build(n_rows: usize, pairs: impl Iterator<Item = (usize, usize, usize)> + Clone) -> Self {
        let mut offsets = vec![0usize; n_rows + 1];
        for (row, _, _) in pairs.clone() {
            offsets[row + 1] += 1;
        }
        for r in 0..n_rows {
            offsets[r + 1] += offsets[r];
        }
        let mut cursor = offsets.clone();
        let mut entries = vec![(0, 0); offsets[n_rows]];
        for (row, other, s) in pairs {
            entries[cursor[row]] = (other, s);
            cursor[row] += 1;
        }
        Self { offsets, entries }
    }

    fn row(&self, r: usize) -> &[(usize, usize)] {
        &self.entries[self.offsets[r]..self.offsets[r + 1]]
    }
}

/// Fits a model on `train`, a subset of `dataset`'s ratings.
pub fn fit(dataset: &RatingsDataset, train: &[Rating], hp: &Hyperparams) -> Result<FactorModel> {
    fit_with(dataset, train, hp, &FitOptions::default()).map(|(m, _)| m)
}

pub fn fit_with(
    dataset: &RatingsDataset,
    train: &[Rating],
    hp: &Hyperparams,
    options: &FitOptions,
) -> Result<(FactorModel, FitTrace)> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let scores = dataset.score_set().clone();

    // Compact to the users and items that appear in `train`, keeping
    // dataset order.
    let mut user_map = vec![usize::MAX; dataset.n_users()];
    let mut item_map = vec![usize::MAX; dataset.n_items()];
    for r in train {
        if r.user >= dataset.n_users() || r.item >= dataset.n_items() {
            return Err(Error::InvalidArgument(format!(
                "rating ({}, {}) outside the dataset",
                r.user, r.item
            )));
        }
        user_map[r.user] = 0;
        item_map[r.item] = 0;
    }
    let user_ids = compact(&mut user_map, dataset.user_ids());
    let item_ids = compact(&mut item_map, dataset.item_ids());
    let local: Vec<Rating> = train
        .iter()
        .map(|r| Rating {
            user: user_map[r.user],
            item: item_map[r.item],
            value: r.value,
        })
        .collect();

    fit_indexed(scores, *hp, user_ids, item_ids, &local, options)
}

fn compact(map: &mut [usize], ids: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for (n, slot) in map.iter_mut().enumerate() {
        if *slot != usize::MAX {
            *slot = out.len();
            out.push(ids[n].clone());
        }
    }
    out
}

/// Fits on ratings already expressed in the model's own index space.
pub fn fit_indexed(
    scores: ScoreSet,
    hp: Hyperparams,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    ratings: &[Rating],
    options: &FitOptions,
) -> Result<(FactorModel, FitTrace)> {
    hp.validate()?;
    if ratings.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if options.threads == 0 {
        return Err(Error::InvalidArgument("threads must be at least 1".into()));
    }
    let (nu, ni) = (user_ids.len(), item_ids.len());
    let (d, k) = (scores.len(), hp.k);
    let mut triples = Vec::with_capacity(ratings.len());
    for r in ratings {
        if r.user >= nu || r.item >= ni {
            return Err(Error::InvalidArgument(format!(
                "rating ({}, {}) outside {nu} users x {ni} items",
                r.user, r.item
            )));
        }
        triples.push((r.user, r.item, scores.index_of(r.value)?));
    }
    let by_user = Adjacency::build(nu, triples.iter().map(|&(u, i, s)| (u, i, s)));
    let by_item = Adjacency::build(ni, triples.iter().map(|&(u, i, s)| (i, u, s)));

    let mut rng = seed::rng(hp.seed);
    let p: Vec<f64> = (0..nu * d * k).map(|_| rng.gen::<f64>()).collect();
    let q: Vec<f64> = (0..ni * d * k).map(|_| rng.gen::<f64>()).collect();
    let mut model = FactorModel::from_parts(scores, hp, user_ids, item_ids, p, q)?;

    let mut trace = FitTrace::default();
    if options.track_objective {
        trace.initial_objective = Some(training_objective(&model, ratings)?);
    }

    let pool = thread_pool(options.threads)?;
    for epoch in 1..=hp.m {
        let (p, q) = model.parts_mut();
        let user_phase_ratings = phase(p, q, &by_user, d, k, hp, pool.as_ref());
        let item_phase_ratings = phase(q, p, &by_item, d, k, hp, pool.as_ref());
        if p.iter().chain(q.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let objective = if options.track_objective {
            Some(training_objective(&model, ratings)?)
        } else {
            None
        };
        trace.epochs.push(EpochTrace {
            epoch,
            user_phase_ratings,
            item_phase_ratings,
            objective,
        });
    }
    Ok((model, trace))
}

#[cfg(feature = "parallel")]
type Pool = rayon::ThreadPool;
#[cfg(not(feature = "parallel"))]
type Pool = ();

#[cfg(feature = "parallel")]
fn thread_pool(threads: usize) -> Result<Option<Pool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("cannot start {threads} threads: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn thread_pool(_threads: usize) -> Result<Option<Pool>> {
    Ok(None)
}

/// Updates every row of `rows` against the frozen `others`; returns the
/// number of ratings visited.
fn phase(
    rows: &mut [f64],
    others: &[f64],
    adjacency: &Adjacency,
    d: usize,
    k: usize,
    hp: Hyperparams,
    pool: Option<&Pool>,
) -> usize {
    let b = d * k;
    let update = |(r, row): (usize, &mut [f64])| -> usize {
        let neighbours = adjacency.row(r);
        if neighbours.is_empty() {
            return 0;
        }
        let mut grad = vec![0.0; b];
        let mut scratch = vec![0.0; d];
        for &(o, s) in neighbours {
            accumulate_rating(
                row,
                &others[o * b..(o + 1) * b],
                s,
                k,
                hp.gamma,
                &mut scratch,
                &mut grad,
                &mut [],
            );
        }
        for (x, g) in row.iter_mut().zip(&grad) {
            *x += hp.eta * g;
        }
        neighbours.len()
    };

    match pool {
        #[cfg(feature = "parallel")]
        Some(pool) => {
            use rayon::prelude::*;
            pool.install(|| rows.par_chunks_mut(b).enumerate().map(update).sum())
        }
        _ => rows.chunks_mut(b).enumerate().map(update).sum(),
    }
}
