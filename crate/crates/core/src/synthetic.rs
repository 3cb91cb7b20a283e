//! Planted low-rank rating generator for tests and demos.
//!
//! Users and items get latent positions on `[0, 1]^rank`; the "true" score of
//! a pair is the affinity `mean(x_u * y_i)` mapped onto the score range, and
//! the observed rating is that score perturbed by a discrete noise step with
//! probability `noise`.

use rand::seq::index;
use rand::Rng;

use crate::data::RatingsDataset;
use crate::error::{Error, Result};
use crate::scores::ScoreSet;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Fraction of the `n_users x n_items` pairs observed.
    pub density: f64,
    pub rank: usize,
    /// Probability that an observed rating moves one score away from the
    /// planted one.
    pub noise: f64,
    pub score_set: ScoreSet,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 60,
            n_items: 80,
            density: 0.25,
            rank: 2,
            noise: 0.2,
            score_set: ScoreSet::integer_range(1, 5).expect("valid range"),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.rank == 0 {
            return Err(Error::InvalidArgument(
                "synthetic data needs at least one user, item and latent dimension".into(),
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidArgument(format!("density must lie in (0, 1], got {}", self.density)));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidArgument(format!("noise must lie in [0, 1], got {}", self.noise)));
        }
        Ok(())
    }
}

/// Generates a dataset with ids `u0..` and `i0..`, all ratings tagged train.
pub fn generate(spec: &SyntheticSpec) -> Result<RatingsDataset> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let r = spec.rank;
    let x: Vec<f64> = (0..spec.n_users * r).map(|_| rng.gen::<f64>()).collect();
    let y: Vec<f64> = (0..spec.n_items * r).map(|_| rng.gen::<f64>()).collect();

    let total = spec.n_users * spec.n_items;
    let n = ((spec.density * total as f64).round() as usize).clamp(1, total);
    let mut cells = index::sample(&mut rng, total, n).into_vec();
    cells.sort_unstable();

    let d = spec.score_set.len();
    let mut triples = Vec::with_capacity(n);
    for cell in cells {
        let (u, i) = (cell / spec.n_items, cell % spec.n_items);
        // products of two U(0,1) have mean 1/4; stretch so the scale is used
        let affinity: f64 = (0..r).map(|f| x[u * r + f] * y[i * r + f]).sum::<f64>() / r as f64;
        let level = (affinity * 2.0).min(1.0);
        let mut s = ((level * (d - 1) as f64).round() as usize).min(d - 1);
        if rng.gen::<f64>() < spec.noise {
            s = if s == 0 {
                1.min(d - 1)
            } else if s == d - 1 || rng.gen::<bool>() {
                s - 1
            } else {
                s + 1
            };
        }
        triples.push((format!("u{u}"), format!("i{i}"), spec.score_set.value(s)));
    }
    RatingsDataset::from_triples(spec.score_set.clone(), triples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_and_determinism() {
        let spec = SyntheticSpec::default();
        let a = generate(&spec).unwrap();
        assert_eq!(a.len(), 1200);
        let b = generate(&spec).unwrap();
        assert_eq!(a.ratings(), b.ratings());
        for r in a.ratings() {
            assert!(a.score_set().contains(r.value));
        }
    }

    #[test]
    fn rejects_bad_density() {
        let spec = SyntheticSpec {
            density: 0.0,
            ..SyntheticSpec::default()
        };
        assert!(generate(&spec).is_err());
    }
}
