//! Probabilistic matrix factorization reference model: `r_hat = P_u . Q_i`,
//! trained by per-rating SGD on the regularized squared error.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Rating, RatingsDataset};
use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::scores::ScoreSet;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct PmfModel {
    score_set: ScoreSet,
    hyperparams: Hyperparams,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    /// users x k
    p: Vec<f64>,
    /// items x k
    q: Vec<f64>,
}

impl PmfModel {
    pub fn from_parts(
        score_set: ScoreSet,
        hyperparams: Hyperparams,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        p: Vec<f64>,
        q: Vec<f64>,
    ) -> Result<Self> {
        hyperparams.validate()?;
        let k = hyperparams.k;
        if p.len() != user_ids.len() * k || q.len() != item_ids.len() * k {
            return Err(Error::MalformedModel(format!(
                "PMF factor shapes {} / {} do not match {} users, {} items, k = {k}",
                p.len(),
                q.len(),
                user_ids.len(),
                item_ids.len()
            )));
        }
        if p.iter().chain(&q).any(|x| !x.is_finite()) {
            return Err(Error::MalformedModel("non-finite factor".into()));
        }
        let index = |ids: &[String]| -> Result<HashMap<String, usize>> {
            let mut map = HashMap::with_capacity(ids.len());
            for (n, id) in ids.iter().enumerate() {
                if map.insert(id.clone(), n).is_some() {
                    return Err(Error::MalformedModel(format!("duplicate id {id:?}")));
                }
            }
            Ok(map)
        };
        Ok(Self {
            user_lookup: index(&user_ids)?,
            item_lookup: index(&item_ids)?,
            score_set,
            hyperparams,
            user_ids,
            item_ids,
            p,
            q,
        })
    }

    pub fn score_set(&self) -> &ScoreSet {
        &self.score_set
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_lookup.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_lookup.get(id).copied()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    fn dot(&self, u: usize, i: usize) -> f64 {
        let k = self.hyperparams.k;
        dot(&self.p[u * k..(u + 1) * k], &self.q[i * k..(i + 1) * k])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A PMF prediction: the clamped dot product and its nearest score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfPrediction {
    pub value: f64,
    pub class: f64,
}

/// Reliability of every PMF prediction; PMF never withholds a prediction.
pub const PMF_RELIABILITY: f64 = 1.0;

pub fn pmf_predict(model: &PmfModel, u: usize, i: usize) -> Result<PmfPrediction> {
    if u >= model.user_ids.len() || i >= model.item_ids.len() {
        return Err(Error::ColdStart(format!("pair ({u}, {i}) unknown to the model")));
    }
    Ok(clamp_prediction(model.dot(u, i), &model.score_set))
}

pub(crate) fn clamp_prediction(raw: f64, scores: &ScoreSet) -> PmfPrediction {
    let value = raw.clamp(scores.min(), scores.max());
    PmfPrediction {
        value,
        class: scores.nearest(value),
    }
}

/// `sum (r - P_u . Q_i)^2 + gamma (|P|^2 + |Q|^2)` over `ratings` (model
/// index space).
pub fn pmf_loss(model: &PmfModel, ratings: &[Rating]) -> f64 {
    let sse: f64 = ratings
        .iter()
        .map(|r| (r.value - model.dot(r.user, r.item)).powi(2))
        .sum();
    let norm: f64 = model.p.iter().chain(&model.q).map(|x| x * x).sum();
    sse + model.hyperparams.gamma * norm
}

/// Gradient of [`pmf_loss`] with respect to `P` and `Q`.
pub fn pmf_loss_gradient(model: &PmfModel, ratings: &[Rating]) -> (Vec<f64>, Vec<f64>) {
    let k = model.hyperparams.k;
    let gamma = model.hyperparams.gamma;
    let mut gp: Vec<f64> = model.p.iter().map(|x| 2.0 * gamma * x).collect();
    let mut gq: Vec<f64> = model.q.iter().map(|x| 2.0 * gamma * x).collect();
    for r in ratings {
        let e = r.value - model.dot(r.user, r.item);
        for f in 0..k {
            gp[r.user * k + f] -= 2.0 * e * model.q[r.item * k + f];
            gq[r.item * k + f] -= 2.0 * e * model.p[r.user * k + f];
        }
    }
    (gp, gq)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PmfTrace {
    /// Loss before training and after every epoch.
    pub losses: Vec<f64>,
}

pub fn pmf_fit(dataset: &RatingsDataset, train: &[Rating], hp: &Hyperparams) -> Result<PmfModel> {
    pmf_fit_with(dataset, train, hp, false).map(|(m, _)| m)
}

/// Factors start `U(0, 1)`; each epoch visits the ratings in a freshly
/// shuffled order and applies
/// `P_u += eta (e Q_i - gamma P_u)`, `Q_i += eta (e P_u - gamma Q_i)`
/// with `e = r - P_u . Q_i`.
pub fn pmf_fit_with(
    dataset: &RatingsDataset,
    train: &[Rating],
    hp: &Hyperparams,
    track_loss: bool,
) -> Result<(PmfModel, PmfTrace)> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let mut user_map = vec![usize::MAX; dataset.n_users()];
    let mut item_map = vec![usize::MAX; dataset.n_items()];
    for r in train {
        user_map[r.user] = 0;
        item_map[r.item] = 0;
    }
    let compact = |map: &mut Vec<usize>, ids: &[String]| {
        let mut out = Vec::new();
        for (n, slot) in map.iter_mut().enumerate() {
            if *slot != usize::MAX {
                *slot = out.len();
                out.push(ids[n].clone());
            }
        }
        out
    };
    let user_ids = compact(&mut user_map, dataset.user_ids());
    let item_ids = compact(&mut item_map, dataset.item_ids());
    let mut local: Vec<Rating> = train
        .iter()
        .map(|r| Rating {
            user: user_map[r.user],
            item: item_map[r.item],
            value: r.value,
        })
        .collect();

    let k = hp.k;
    let mut rng = seed::rng(hp.seed);
    let p = (0..user_ids.len() * k).map(|_| rng.gen::<f64>()).collect();
    let q = (0..item_ids.len() * k).map(|_| rng.gen::<f64>()).collect();
    let mut model = PmfModel::from_parts(dataset.score_set().clone(), *hp, user_ids, item_ids, p, q)?;

    let mut trace = PmfTrace::default();
    if track_loss {
        trace.losses.push(pmf_loss(&model, &local));
    }
    for epoch in 1..=hp.m {
        local.shuffle(&mut rng);
        for r in &local {
            let (pu, qi) = (r.user * k, r.item * k);
            let e = r.value - dot(&model.p[pu..pu + k], &model.q[qi..qi + k]);
            for f in 0..k {
                let (pf, qf) = (model.p[pu + f], model.q[qi + f]);
                model.p[pu + f] += hp.eta * (e * qf - hp.gamma * pf);
                model.q[qi + f] += hp.eta * (e * pf - hp.gamma * qf);
            }
        }
        if model.p.iter().chain(&model.q).any(|x| !x.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        if track_loss {
            trace.losses.push(pmf_loss(&model, &local));
        }
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores() -> ScoreSet {
        ScoreSet::integer_range(1, 5).unwrap()
    }

    fn hp(k: usize, m: usize) -> Hyperparams {
        Hyperparams {
            k,
            gamma: 0.01,
            eta: 0.01,
            m,
            seed: 5,
        }
    }

    fn single(p: f64, q: f64) -> PmfModel {
        PmfModel::from_parts(scores(), hp(1, 1), vec!["u".into()], vec!["i".into()], vec![p], vec![q]).unwrap()
    }

    #[test]
    fn zero_factors_clamp_to_min_score() {
        let m = single(0.0, 0.0);
        let pred = pmf_predict(&m, 0, 0).unwrap();
        assert_eq!(pred.value, 1.0);
        assert_eq!(pred.class, 1.0);
    }

    #[test]
    fn interior_and_clamped_predictions() {
        let pred = pmf_predict(&single(1.7, 2.0), 0, 0).unwrap();
        assert!((pred.value - 3.4).abs() < 1e-12);
        assert_eq!(pred.class, 3.0);
        let pred = pmf_predict(&single(3.0, 3.0), 0, 0).unwrap();
        assert_eq!(pred.value, 5.0);
    }

    #[test]
    fn loss_decreases_early_on_single_rating() {
        let ds = RatingsDataset::from_triples(scores(), [("u", "i", 4.0)]).unwrap();
        let (_, trace) = pmf_fit_with(&ds, &ds.train(), &hp(1, 10), true).unwrap();
        for w in trace.losses.windows(2) {
            assert!(w[1] < w[0], "{:?}", trace.losses);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = RatingsDataset::from_triples(
            scores(),
            (0..30).map(|j| (format!("u{}", j % 4), format!("i{}", j % 7), (j % 5 + 1) as f64)),
        )
        .unwrap();
        let a = pmf_fit(&ds, &ds.train(), &hp(3, 20)).unwrap();
        let b = pmf_fit(&ds, &ds.train(), &hp(3, 20)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cold_start_is_an_error() {
        assert!(matches!(pmf_predict(&single(1.0, 1.0), 1, 0), Err(Error::ColdStart(_))));
    }
}
