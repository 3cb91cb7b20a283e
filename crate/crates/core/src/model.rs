//! The restricted Bernoulli factor model.
//!
//! Every user `u` and item `i` carries one `k`-dimensional latent vector per
//! score `s`. The probability that `u` rates `i` with score `s` is the `s`-th
//! softmax component of the vector of per-score dot products
//! `(P_u^s . Q_i^s)_s`, so the output is a proper distribution over the
//! score set. The mode of that distribution is the prediction and its mass is
//! the reliability.

use std::collections::HashMap;

use serde::Serialize;

use crate::data::Rating;
use crate::error::{Error, Result};
use crate::scores::ScoreSet;

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyperparams {
    /// Latent dimensionality.
    pub k: usize,
    /// L2 regularization.
    pub gamma: f64,
    /// Learning rate.
    pub eta: f64,
    /// Number of epochs.
    pub m: usize,
    pub seed: u64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidHyperparams("k must be at least 1".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidHyperparams(format!(
                "gamma must be a finite non-negative number, got {}",
                self.gamma
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidHyperparams(format!(
                "eta must be a finite positive number, got {}",
                self.eta
            )));
        }
        if self.m < 1 {
            return Err(Error::InvalidHyperparams("m must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trained user and item factor tensors.
///
/// `P` is stored user-major, then score, then factor: the factor `f` of
/// score channel `s` for user `u` lives at `(u * d + s) * k + f`. `Q` uses
/// the same layout over items.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    score_set: ScoreSet,
    hyperparams: Hyperparams,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl FactorModel {
    pub fn from_parts(
        score_set: ScoreSet,
        hyperparams: Hyperparams,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        p: Vec<f64>,
        q: Vec<f64>,
    ) -> Result<Self> {
        hyperparams.validate()?;
        let block = score_set.len() * hyperparams.k;
        if p.len() != user_ids.len() * block {
            return Err(Error::MalformedModel(format!(
                "P has {} entries, expected {} users x {} scores x {} factors",
                p.len(),
                user_ids.len(),
                score_set.len(),
                hyperparams.k
            )));
        }
        if q.len() != item_ids.len() * block {
            return Err(Error::MalformedModel(format!(
                "Q has {} entries, expected {} items x {} scores x {} factors",
                q.len(),
                item_ids.len(),
                score_set.len(),
                hyperparams.k
            )));
        }
        if p.iter().chain(&q).any(|x| !x.is_finite()) {
            return Err(Error::MalformedModel("non-finite factor".into()));
        }
        let user_lookup = lookup(&user_ids, "user")?;
        let item_lookup = lookup(&item_ids, "item")?;
        Ok(Self {
            score_set,
            hyperparams,
            user_ids,
            item_ids,
            user_lookup,
            item_lookup,
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

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn d(&self) -> usize {
        self.score_set.len()
    }

    pub fn k(&self) -> usize {
        self.hyperparams.k
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

    /// All `d * k` factors of user `u`.
    pub fn user_block(&self, u: usize) -> &[f64] {
        let b = self.d() * self.k();
        &self.p[u * b..(u + 1) * b]
    }

    pub fn item_block(&self, i: usize) -> &[f64] {
        let b = self.d() * self.k();
        &self.q[i * b..(i + 1) * b]
    }

    fn check_pair(&self, u: usize, i: usize) -> Result<()> {
        if u >= self.n_users() {
            return Err(Error::ColdStart(format!("user index {u} unknown to the model")));
        }
        if i >= self.n_items() {
            return Err(Error::ColdStart(format!("item index {i} unknown to the model")));
        }
        Ok(())
    }

    /// Resolves external identifiers to model indices.
    pub fn resolve(&self, user: &str, item: &str) -> Result<(usize, usize)> {
        let u = self
            .user_index(user)
            .ok_or_else(|| Error::ColdStart(format!("user {user:?} unknown to the model")))?;
        let i = self
            .item_index(item)
            .ok_or_else(|| Error::ColdStart(format!("item {item:?} unknown to the model")))?;
        Ok((u, i))
    }

    /// The `d` per-score dot products `P_u^s . Q_i^s`.
    pub fn dots(&self, u: usize, i: usize) -> Result<Vec<f64>> {
        self.check_pair(u, i)?;
        let mut out = vec![0.0; self.d()];
        dots_into(self.user_block(u), self.item_block(i), self.k(), &mut out);
        Ok(out)
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.p, &mut self.q)
    }
}

fn lookup(ids: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (n, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), n).is_some() {
            return Err(Error::MalformedModel(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(map)
}

pub(crate) fn dots_into(user: &[f64], item: &[f64], k: usize, out: &mut [f64]) {
    for (s, x) in out.iter_mut().enumerate() {
        let a = &user[s * k..(s + 1) * k];
        let b = &item[s * k..(s + 1) * k];
        *x = a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
}

/// Max-shifted softmax, in place. Inputs must be finite.
pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}

/// `exp(x_j - M) / sum_t exp(x_t - M)` with `M = max(x)`.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// `log softmax(x)[r]`, computed without forming the probabilities.
pub(crate) fn log_softmax_at(x: &[f64], r: usize) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x[r] - max - log_total
}

/// A probability vector over the score set together with its mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionDistribution {
    pub probs: Vec<f64>,
    /// Smallest index attaining the maximum probability.
    pub mode_index: usize,
    /// Probability of the mode.
    pub reliability: f64,
    /// Probability-weighted mean of the score values.
    pub mean: f64,
}

impl PredictionDistribution {
    pub fn from_probs(probs: Vec<f64>, scores: &ScoreSet) -> Self {
        debug_assert_eq!(probs.len(), scores.len());
        let mut mode_index = 0;
        for (j, &p) in probs.iter().enumerate().skip(1) {
            if p > probs[mode_index] {
                mode_index = j;
            }
        }
        let mean = probs
            .iter()
            .zip(scores.values())
            .map(|(p, v)| p * v)
            .sum();
        Self {
            reliability: probs[mode_index],
            mode_index,
            mean,
            probs,
        }
    }

    pub fn uniform(scores: &ScoreSet) -> Self {
        let d = scores.len();
        Self::from_probs(vec![1.0 / d as f64; d], scores)
    }

    pub fn mode_value(&self, scores: &ScoreSet) -> f64 {
        scores.value(self.mode_index)
    }
}

pub fn predict_distribution(model: &FactorModel, u: usize, i: usize) -> Result<PredictionDistribution> {
    let mut probs = model.dots(u, i)?;
    softmax_in_place(&mut probs);
    Ok(PredictionDistribution::from_probs(probs, model.score_set()))
}

/// Mode-criterion prediction: `Some((score, reliability))` when the
/// reliability reaches `theta`, `None` when no reliable prediction exists.
pub fn predict(model: &FactorModel, u: usize, i: usize, theta: f64) -> Result<Option<(f64, f64)>> {
    check_theta(theta)?;
    let dist = predict_distribution(model, u, i)?;
    Ok(apply_threshold(&dist, model.score_set(), theta))
}

pub fn apply_threshold(dist: &PredictionDistribution, scores: &ScoreSet, theta: f64) -> Option<(f64, f64)> {
    (dist.reliability >= theta).then(|| (dist.mode_value(scores), dist.reliability))
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "reliability threshold must lie in [0, 1], got {theta}"
        )))
    }
}

fn score_indices(model: &FactorModel, ratings: &[Rating]) -> Result<Vec<usize>> {
    ratings
        .iter()
        .map(|r| {
            model.check_pair(r.user, r.item)?;
            model.score_set().index_of(r.value)
        })
        .collect()
}

/// Penalized log-likelihood `sum log sigma_r(P_u . Q_i) - gamma/2 (|P|^2 + |Q|^2)`
/// over `ratings`, which are given in model index space.
pub fn log_likelihood(model: &FactorModel, ratings: &[Rating]) -> Result<f64> {
    let fit = data_term(model, ratings)?;
    let gamma = model.hyperparams().gamma;
    if gamma == 0.0 {
        return Ok(fit);
    }
    let norm: f64 = model.p.iter().chain(&model.q).map(|x| x * x).sum();
    Ok(fit - 0.5 * gamma * norm)
}

/// The objective whose gradient the trainer ascends: the penalty is charged
/// once per observed rating, `sum [log sigma_r - gamma/2 (|P_u|^2 + |Q_i|^2)]`.
pub fn training_objective(model: &FactorModel, ratings: &[Rating]) -> Result<f64> {
    let fit = data_term(model, ratings)?;
    let gamma = model.hyperparams().gamma;
    if gamma == 0.0 {
        return Ok(fit);
    }
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let penalty: f64 = ratings
        .iter()
        .map(|r| sq(model.user_block(r.user)) + sq(model.item_block(r.item)))
        .sum();
    Ok(fit - 0.5 * gamma * penalty)
}

fn data_term(model: &FactorModel, ratings: &[Rating]) -> Result<f64> {
    let idx = score_indices(model, ratings)?;
    let mut x = vec![0.0; model.d()];
    let mut total = 0.0;
    for (r, &s) in ratings.iter().zip(&idx) {
        dots_into(model.user_block(r.user), model.item_block(r.item), model.k(), &mut x);
        total += log_softmax_at(&x, s);
    }
    Ok(total)
}

/// Gradient of one rating's penalized log-likelihood term with respect to the
/// rated user's and item's factors, both laid out score-major (`d * k`).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingGradient {
    pub user: Vec<f64>,
    pub item: Vec<f64>,
}

/// `d/dP_u^s = (delta_{s,r} - sigma_s) Q_i^s - gamma P_u^s`, and symmetrically
/// for `Q_i^s`.
pub fn rating_gradient(model: &FactorModel, u: usize, i: usize, value: f64) -> Result<RatingGradient> {
    model.check_pair(u, i)?;
    let r = model.score_set().index_of(value)?;
    let (d, k) = (model.d(), model.k());
    let mut user = vec![0.0; d * k];
    let mut item = vec![0.0; d * k];
    let mut sigma = vec![0.0; d];
    accumulate_rating(
        model.user_block(u),
        model.item_block(i),
        r,
        k,
        model.hyperparams().gamma,
        &mut sigma,
        &mut user,
        &mut item,
    );
    Ok(RatingGradient { user, item })
}

/// Adds one rating's gradient contribution to `grad_user` (w.r.t. `user`)
/// and, when non-empty, `grad_item` (w.r.t. `item`). `scratch` has length d.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_rating(
    user: &[f64],
    item: &[f64],
    r: usize,
    k: usize,
    gamma: f64,
    scratch: &mut [f64],
    grad_user: &mut [f64],
    grad_item: &mut [f64],
) {
    dots_into(user, item, k, scratch);
    softmax_in_place(scratch);
    for (s, &sigma) in scratch.iter().enumerate() {
        let coef = if s == r { 1.0 - sigma } else { -sigma };
        let span = s * k..(s + 1) * k;
        let (us, is) = (&user[span.clone()], &item[span.clone()]);
        if !grad_user.is_empty() {
            for ((g, &q), &p) in grad_user[span.clone()].iter_mut().zip(is).zip(us) {
                *g += coef * q - gamma * p;
            }
        }
        if !grad_item.is_empty() {
            for ((g, &p), &q) in grad_item[span.clone()].iter_mut().zip(us).zip(is) {
                *g += coef * p - gamma * q;
            }
        }
    }
}

/// Gradient of [`training_objective`] with respect to all of `P` and `Q`.
pub fn objective_gradient(model: &FactorModel, ratings: &[Rating]) -> Result<(Vec<f64>, Vec<f64>)> {
    let idx = score_indices(model, ratings)?;
    let (d, k) = (model.d(), model.k());
    let b = d * k;
    let mut gp = vec![0.0; model.p.len()];
    let mut gq = vec![0.0; model.q.len()];
    let mut scratch = vec![0.0; d];
    for (r, &s) in ratings.iter().zip(&idx) {
        let (gu, gi) = (r.user * b, r.item * b);
        accumulate_rating(
            model.user_block(r.user),
            model.item_block(r.item),
            s,
            k,
            model.hyperparams().gamma,
            &mut scratch,
            &mut gp[gu..gu + b],
            &mut gq[gi..gi + b],
        );
    }
    Ok((gp, gq))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(d: usize) -> ScoreSet {
        ScoreSet::integer_range(1, d as i32).unwrap()
    }

    fn hp(k: usize, gamma: f64) -> Hyperparams {
        Hyperparams {
            k,
            gamma,
            eta: 0.01,
            m: 1,
            seed: 0,
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|j| j.to_string()).collect()
    }

    fn zero_model(d: usize, k: usize) -> FactorModel {
        FactorModel::from_parts(scores(d), hp(k, 0.0), ids(1), ids(1), vec![0.0; d * k], vec![0.0; d * k]).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&[0.0; 5]).unwrap();
        for v in p {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_point() {
        // e / (e + 1)
        let p = softmax(&[1.0, 0.0]).unwrap();
        assert!((p[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((p[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(softmax(&[1.0, f64::NAN]), Err(Error::NonFinite)));
        assert!(matches!(softmax(&[f64::INFINITY, 0.0]), Err(Error::NonFinite)));
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn softmax_survives_large_inputs() {
        let p = softmax(&[1000.0, 999.0]).unwrap();
        assert!((p[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn zero_factors_give_uniform_distribution() {
        let m = zero_model(5, 3);
        let dist = predict_distribution(&m, 0, 0).unwrap();
        assert!((dist.reliability - 0.2).abs() < 1e-15);
        assert_eq!(dist.mode_index, 0);
        assert!((dist.mean - 3.0).abs() < 1e-12);
        assert_eq!(predict(&m, 0, 0, 0.5).unwrap(), None);
        assert_eq!(predict(&m, 0, 0, 0.0).unwrap(), Some((1.0, dist.reliability)));
    }

    #[test]
    fn constructed_dots_give_expected_distribution() {
        // d = 3, k = 1: P_u = (1, 0, 0), Q_i = (1, 1, 1) -> dots (1, 0, 0).
        let m = FactorModel::from_parts(scores(3), hp(1, 0.0), ids(1), ids(1), vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 1.0])
            .unwrap();
        let dist = predict_distribution(&m, 0, 0).unwrap();
        // e / (e + 2), 1 / (e + 2)
        let e = std::f64::consts::E;
        assert!((dist.probs[0] - e / (e + 2.0)).abs() < 1e-15);
        assert!((dist.probs[0] - 0.57612).abs() < 1e-5);
        assert!((dist.probs[1] - 0.21194).abs() < 1e-5);
        assert!((dist.probs[2] - 0.21194).abs() < 1e-5);
        assert_eq!(dist.mode_index, 0);
    }

    #[test]
    fn mode_ties_pick_smallest_index() {
        let s = scores(3);
        let dist = PredictionDistribution::from_probs(vec![0.25, 0.5, 0.25], &s);
        assert_eq!(dist.mode_index, 1);
        let dist = PredictionDistribution::from_probs(vec![0.4, 0.2, 0.4], &s);
        assert_eq!(dist.mode_index, 0);
    }

    #[test]
    fn threshold_rule_on_constructed_distribution() {
        let s = scores(3);
        let dist = PredictionDistribution::from_probs(vec![0.1, 0.7, 0.2], &s);
        assert_eq!(apply_threshold(&dist, &s, 0.7), Some((2.0, 0.7)));
        assert_eq!(apply_threshold(&dist, &s, 0.71), None);
    }

    #[test]
    fn unknown_indices_are_cold_start() {
        let m = zero_model(5, 2);
        assert!(matches!(predict_distribution(&m, 1, 0), Err(Error::ColdStart(_))));
        assert!(matches!(predict_distribution(&m, 0, 3), Err(Error::ColdStart(_))));
        assert!(matches!(m.resolve("0", "x"), Err(Error::ColdStart(_))));
    }

    #[test]
    fn theta_outside_unit_interval_is_rejected() {
        let m = zero_model(5, 2);
        assert!(predict(&m, 0, 0, 1.5).is_err());
        assert!(predict(&m, 0, 0, -0.1).is_err());
    }

    #[test]
    fn likelihood_of_uniform_model() {
        let m = zero_model(5, 2);
        let r = [Rating { user: 0, item: 0, value: 3.0 }];
        let ll = log_likelihood(&m, &r).unwrap();
        assert!((ll - (0.2f64).ln()).abs() < 1e-12);
        assert!((ll + 1.60944).abs() < 1e-5);
        assert_eq!(log_likelihood(&m, &[]).unwrap(), 0.0);
    }

    #[test]
    fn empty_likelihood_is_minus_penalty() {
        let m = FactorModel::from_parts(scores(2), hp(1, 0.5), ids(1), ids(1), vec![1.0, 2.0], vec![0.0, 3.0]).unwrap();
        // -(0.5 / 2) * (1 + 4 + 9)
        assert!((log_likelihood(&m, &[]).unwrap() + 3.5).abs() < 1e-15);
    }

    #[test]
    fn likelihood_rejects_unknown_score() {
        let m = zero_model(5, 2);
        let r = [Rating { user: 0, item: 0, value: 3.5 }];
        assert!(matches!(log_likelihood(&m, &r), Err(Error::UnknownScore(_))));
    }

    #[test]
    fn zero_factors_have_zero_gradient() {
        let m = zero_model(4, 3);
        let g = rating_gradient(&m, 0, 0, 2.0).unwrap();
        assert!(g.user.iter().chain(&g.item).all(|&x| x == 0.0));
    }

    #[test]
    fn hyperparams_validation() {
        assert!(hp(0, 0.0).validate().is_err());
        assert!(hp(2, -0.1).validate().is_err());
        assert!(Hyperparams { eta: 0.0, ..hp(2, 0.0) }.validate().is_err());
        assert!(Hyperparams { m: 0, ..hp(2, 0.0) }.validate().is_err());
        assert!(hp(2, 0.0).validate().is_ok());
    }

    #[test]
    fn from_parts_checks_shapes() {
        assert!(FactorModel::from_parts(scores(2), hp(1, 0.0), ids(1), ids(1), vec![0.0], vec![0.0, 0.0]).is_err());
        assert!(FactorModel::from_parts(scores(2), hp(1, 0.0), ids(1), ids(1), vec![0.0, f64::NAN], vec![0.0, 0.0]).is_err());
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(FactorModel::from_parts(scores(2), hp(1, 0.0), dup, ids(1), vec![0.0; 4], vec![0.0; 2]).is_err());
    }
}
