//! WebAssembly bindings for the browser demo. Each export takes and returns
//! JSON so the page needs no generated TypeScript types; the typed functions
//! underneath are plain Rust and tested natively.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use resbemf::baselines::pmf_fit;
use resbemf::data::split;
use resbemf::metrics::{Evaluation, ThresholdGrid};
use resbemf::model::{apply_threshold, PredictionDistribution};
use resbemf::search::{random_search, ModelKind, SearchConfig};
use resbemf::synthetic::{generate, SyntheticSpec};
use resbemf::train::{fit_with, FitOptions};
use resbemf::{softmax, Hyperparams, RatingsDataset, ScoreSet, SearchSpace};

#[derive(Debug, Clone, Serialize)]
pub struct DistributionView {
    pub probs: Vec<f64>,
    pub mode_index: usize,
    pub mode: f64,
    pub reliability: f64,
    pub mean: f64,
    /// The mode when its reliability clears theta.
    pub prediction: Option<f64>,
}

/// Score distribution for a vector of per-score dot products.
pub fn distribution_view(dots: &[f64], scores: &[f64], theta: f64) -> Result<DistributionView, String> {
    let scores = ScoreSet::new(scores.to_vec()).map_err(|e| e.to_string())?;
    if dots.len() != scores.len() {
        return Err(format!("{} dot products for {} scores", dots.len(), scores.len()));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(format!("theta must lie in [0, 1], got {theta}"));
    }
    let dist = PredictionDistribution::from_probs(softmax(dots).map_err(|e| e.to_string())?, &scores);
    Ok(DistributionView {
        mode: dist.mode_value(&scores),
        prediction: apply_threshold(&dist, &scores, theta).map(|(v, _)| v),
        probs: dist.probs,
        mode_index: dist.mode_index,
        reliability: dist.reliability,
        mean: dist.mean,
    })
}

/// Synthetic rating matrix parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct DataParams {
    pub n_users: usize,
    pub n_items: usize,
    pub density: f64,
    pub noise: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DataParams {
    fn default() -> Self {
        Self {
            n_users: 80,
            n_items: 100,
            density: 0.2,
            noise: 0.25,
            test_fraction: 0.2,
            seed: 1,
        }
    }
}

impl DataParams {
    fn dataset(&self) -> Result<RatingsDataset, String> {
        if self.n_users * self.n_items > 250_000 {
            return Err("at most 250000 user/item cells in the browser".into());
        }
        let spec = SyntheticSpec {
            n_users: self.n_users,
            n_items: self.n_items,
            density: self.density,
            noise: self.noise,
            seed: self.seed,
            ..SyntheticSpec::default()
        };
        let ds = generate(&spec).map_err(|e| e.to_string())?;
        split(&ds, self.test_fraction, self.seed).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct CurveRequest {
    #[serde(default)]
    pub data: DataParams,
    pub k: usize,
    pub gamma: f64,
    pub eta: f64,
    pub m: usize,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
}

fn default_grid() -> usize {
    ThresholdGrid::DEFAULT_POINTS
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub mae: Option<f64>,
    pub accuracy: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveView {
    pub n_train: usize,
    pub n_test: usize,
    pub resbemf: Vec<CurvePoint>,
    /// PMF trained with the same hyperparameters, for comparison.
    pub pmf: Vec<CurvePoint>,
    pub aggregate: Option<(f64, f64)>,
    pub pmf_aggregate: Option<(f64, f64)>,
}

fn curve(ev: &Evaluation, grid: &ThresholdGrid) -> Vec<CurvePoint> {
    grid.thetas()
        .iter()
        .map(|&theta| CurvePoint {
            theta,
            mae: ev.mae_at(theta),
            accuracy: ev.accuracy_at(theta),
            coverage: ev.coverage_at(theta),
        })
        .collect()
}

/// Trains both models on a synthetic split and traces the test metrics
/// across reliability thresholds.
pub fn reliability_curve(req: &CurveRequest) -> Result<CurveView, String> {
    let ds = req.data.dataset()?;
    let grid = ThresholdGrid::new(req.grid_n).map_err(|e| e.to_string())?;
    let hp = Hyperparams {
        k: req.k,
        gamma: req.gamma,
        eta: req.eta,
        m: req.m,
        seed: req.data.seed,
    };
    let (train, test) = (ds.train(), ds.test());
    let (model, _) = fit_with(&ds, &train, &hp, &FitOptions::default()).map_err(|e| e.to_string())?;
    let pmf = pmf_fit(&ds, &train, &hp).map_err(|e| e.to_string())?;
    let ev = Evaluation::new(&model, &ds, &test);
    let pmf_ev = Evaluation::new(&pmf, &ds, &test);
    let pair = |e: &Evaluation| e.aggregate(&grid).map(|a| (a.coverage, a.one_minus_mae));
    Ok(CurveView {
        n_train: train.len(),
        n_test: test.len(),
        resbemf: curve(&ev, &grid),
        pmf: curve(&pmf_ev, &grid),
        aggregate: pair(&ev),
        pmf_aggregate: pair(&pmf_ev),
    })
}

#[derive(Debug, Clone, Deserialize)]
pub struct SearchRequest {
    #[serde(default)]
    pub data: DataParams,
    pub space: SearchSpace,
    #[serde(default = "default_folds")]
    pub n_folds: usize,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
}

fn default_folds() -> usize {
    3
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchPoint {
    pub k: usize,
    pub gamma: f64,
    pub eta: f64,
    pub m: usize,
    pub coverage: f64,
    pub one_minus_mae: f64,
    pub front: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchView {
    pub points: Vec<SearchPoint>,
    /// Positions in `points`, coverage ascending.
    pub front: Vec<usize>,
    pub failed: usize,
}

/// Cross-validated random search on the synthetic train split.
pub fn pareto_search(req: &SearchRequest) -> Result<SearchView, String> {
    if req.space.n_samples() > 64 {
        return Err("at most 64 candidates in the browser".into());
    }
    // folds are drawn from the train partition only
    let ds = req.data.dataset()?;
    let config = SearchConfig {
        kind: ModelKind::Resbemf,
        n_folds: req.n_folds,
        grid: ThresholdGrid::new(req.grid_n).map_err(|e| e.to_string())?,
        seed: req.data.seed,
        threads: 1,
    };
    let outcome = random_search(&req.space, &ds, &config).map_err(|e| e.to_string())?;

    let mut points = Vec::new();
    let mut front = Vec::new();
    for (j, c) in outcome.candidates.iter().enumerate() {
        if let Some(e) = c.evaluated() {
            let on_front = outcome.front.contains(&j);
            points.push(SearchPoint {
                k: e.candidate.k,
                gamma: e.candidate.gamma,
                eta: e.candidate.eta,
                m: e.candidate.m,
                coverage: e.objectives.coverage,
                one_minus_mae: e.objectives.one_minus_mae,
                front: on_front,
            });
        }
    }
    for &j in &outcome.front {
        let before = outcome.candidates[..j].iter().filter(|c| c.evaluated().is_some()).count();
        front.push(before);
    }
    Ok(SearchView {
        points,
        front,
        failed: outcome.n_failed(),
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn distribution(dots: Vec<f64>, scores: Vec<f64>, theta: f64) -> Result<String, JsError> {
    to_json(&distribution_view(&dots, &scores, theta).map_err(|e| JsError::new(&e))?)
}

#[wasm_bindgen(js_name = reliabilityCurve)]
pub fn reliability_curve_json(request: &str) -> Result<String, JsError> {
    let req: CurveRequest = serde_json::from_str(request).map_err(|e| JsError::new(&e.to_string()))?;
    to_json(&reliability_curve(&req).map_err(|e| JsError::new(&e))?)
}

#[wasm_bindgen(js_name = paretoSearch)]
pub fn pareto_search_json(request: &str) -> Result<String, JsError> {
    let req: SearchRequest = serde_json::from_str(request).map_err(|e| JsError::new(&e.to_string()))?;
    to_json(&pareto_search(&req).map_err(|e| JsError::new(&e))?)
}
