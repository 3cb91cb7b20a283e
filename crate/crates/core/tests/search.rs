use std::collections::BTreeSet;

use resbemf::data::make_folds;
use resbemf::metrics::{Evaluation, ThresholdGrid};
use resbemf::search::{cross_validate, random_search, ModelKind, SearchConfig};
use resbemf::synthetic::{generate, SyntheticSpec};
use resbemf::train::{fit_with, FitOptions};
use resbemf::{Hyperparams, SearchSpace};

fn toy() -> resbemf::RatingsDataset {
    generate(&SyntheticSpec {
        n_users: 25,
        n_items: 30,
        density: 0.3,
        seed: 4,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn config(threads: usize) -> SearchConfig {
    SearchConfig {
        kind: ModelKind::Resbemf,
        n_folds: 3,
        grid: ThresholdGrid::new(6).unwrap(),
        seed: 17,
        threads,
    }
}

#[test]
fn cross_validation_matches_manual_folds() {
    let ds = toy();
    let folds = make_folds(&ds, 3, 2).unwrap();
    let grid = ThresholdGrid::new(5).unwrap();
    let hp = Hyperparams {
        k: 2,
        gamma: 0.05,
        eta: 0.01,
        m: 10,
        seed: 99,
    };
    let got = cross_validate(ModelKind::Resbemf, &hp, &ds, &folds, &grid).unwrap();
    assert_eq!(got.per_fold.len(), 3);
    let mut sums = (0.0, 0.0);
    for (f, obj) in got.per_fold.iter().enumerate() {
        let (model, _) = fit_with(&ds, &folds.training(&ds, f), &hp, &FitOptions::default()).unwrap();
        let agg = Evaluation::new(&model, &ds, &folds.held_out(&ds, f)).aggregate(&grid).unwrap();
        assert_eq!(obj.coverage, agg.coverage);
        assert_eq!(obj.one_minus_mae, agg.one_minus_mae);
        sums.0 += agg.coverage;
        sums.1 += agg.one_minus_mae;
    }
    assert!((got.objectives.coverage - sums.0 / 3.0).abs() < 1e-15);
    assert!((got.objectives.one_minus_mae - sums.1 / 3.0).abs() < 1e-15);
}

#[test]
fn pmf_candidates_always_cover_everything() {
    let ds = toy();
    let folds = make_folds(&ds, 2, 0).unwrap();
    let hp = Hyperparams {
        k: 2,
        gamma: 0.05,
        eta: 0.01,
        m: 5,
        seed: 1,
    };
    let got = cross_validate(ModelKind::Pmf, &hp, &ds, &folds, &ThresholdGrid::new(20).unwrap()).unwrap();
    assert!(got.per_fold.iter().all(|o| o.coverage == 1.0));
}

#[test]
fn toy_search_front_equals_dominance_filter() {
    let ds = toy();
    let space = SearchSpace {
        k: vec![1, 2],
        gamma: vec![0.0, 0.1],
        eta: vec![0.005, 0.02],
        m: vec![3, 8],
        search_fraction: 1.0,
    };
    let out = random_search(&space, &ds, &config(1)).unwrap();
    assert_eq!(out.candidates.len(), 16);
    let pts: Vec<_> = out.candidates.iter().map(|c| c.evaluated().unwrap().objectives).collect();
    let expected: BTreeSet<usize> = (0..pts.len())
        .filter(|&j| !pts.iter().any(|q| q.dominates(&pts[j])))
        .collect();
    assert_eq!(out.front.iter().copied().collect::<BTreeSet<_>>(), expected);

    // scheduling does not leak into results
    let parallel = random_search(&space, &ds, &config(4)).unwrap();
    assert_eq!(out, parallel);
}

#[test]
fn single_candidate_is_its_own_front() {
    let space = SearchSpace {
        k: vec![2],
        gamma: vec![0.1],
        eta: vec![0.01],
        m: vec![5],
        search_fraction: 1.0,
    };
    let out = random_search(&space, &toy(), &config(1)).unwrap();
    assert_eq!(out.front, vec![0]);
    let mut csv = Vec::new();
    out.write_front_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 2);
}

#[test]
fn diverging_candidates_are_reported_not_fatal() {
    let space = SearchSpace {
        k: vec![3],
        gamma: vec![0.0],
        eta: vec![0.01, 1.0e6],
        m: vec![20],
        search_fraction: 1.0,
    };
    let out = random_search(&space, &toy(), &config(1)).unwrap();
    assert_eq!(out.n_failed(), 1);
    assert_eq!(out.front, vec![0]);
}
