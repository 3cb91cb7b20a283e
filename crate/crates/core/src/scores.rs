//! The ordered, discrete rating vocabulary.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A strictly increasing list of `d >= 2` distinct rating values.
///
/// Score channels in the factor tensors are addressed by position in this
/// list, so `value(index(v)) == v` for every member `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreSet {
    values: Vec<f64>,
}

impl ScoreSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidScoreSet(format!(
                "need at least 2 scores, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScoreSet("scores must be finite".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidScoreSet(
                "scores must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Sorted distinct values of `observed`.
    pub fn infer<I: IntoIterator<Item = f64>>(observed: I) -> Result<Self> {
        let mut values: Vec<f64> = observed.into_iter().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScoreSet("scores must be finite".into()));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Self::new(values)
    }

    /// `lo, lo+1, ..., hi`
    pub fn integer_range(lo: i32, hi: i32) -> Result<Self> {
        Self::new((lo..=hi).map(f64::from).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, value: f64) -> Option<usize> {
        self.values
            .binary_search_by(|probe| probe.total_cmp(&value))
            .ok()
    }

    pub fn index_of(&self, value: f64) -> Result<usize> {
        self.index(value).ok_or(Error::UnknownScore(value))
    }

    /// Panics if `index >= d`.
    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn range(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn contains(&self, value: f64) -> bool {
        self.index(value).is_some()
    }

    /// Nearest member of the set; exact midpoints resolve to the larger score.
    pub fn nearest(&self, x: f64) -> f64 {
        let mut best = self.values[0];
        for &v in &self.values[1..] {
            if (x - v).abs() <= (x - best).abs() {
                best = v;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for ScoreSet {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ScoreSet> for Vec<f64> {
    fn from(s: ScoreSet) -> Self {
        s.values
    }
}

impl fmt::Display for ScoreSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}
