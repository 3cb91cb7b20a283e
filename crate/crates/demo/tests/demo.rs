use resbemf::search::pareto_front;
use resbemf::search::Objectives;
use resbemf::SearchSpace;
use resbemf_demo::{distribution_view, pareto_search, reliability_curve, CurveRequest, DataParams, SearchRequest};

#[test]
fn distribution_of_known_logits() {
    let v = distribution_view(&[1.0, 0.0, 0.0], &[1.0, 2.0, 3.0], 0.5).unwrap();
    assert!((v.probs[0] - 0.57612).abs() < 1e-5);
    assert_eq!(v.mode, 1.0);
    assert_eq!(v.prediction, Some(1.0));
    let v = distribution_view(&[0.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap();
    assert_eq!(v.prediction, None);
    assert!(distribution_view(&[0.0; 2], &[1.0, 2.0, 3.0], 0.0).is_err());
}

#[test]
fn curve_has_one_point_per_threshold() {
    let req = CurveRequest {
        data: DataParams::default(),
        k: 3,
        gamma: 0.05,
        eta: 0.02,
        m: 20,
        grid_n: 10,
    };
    let view = reliability_curve(&req).unwrap();
    assert_eq!(view.resbemf.len(), 10);
    assert_eq!(view.resbemf[0].coverage, Some(1.0));
    assert!(view.pmf.iter().all(|p| p.coverage == Some(1.0)));
    assert_eq!(view.n_train + view.n_test, 1600);
}

#[test]
fn search_front_is_consistent() {
    let req = SearchRequest {
        data: DataParams { n_users: 30, n_items: 40, ..DataParams::default() },
        space: SearchSpace {
            k: vec![2, 4],
            gamma: vec![0.01, 0.1],
            eta: vec![0.01, 0.03],
            m: vec![10],
            search_fraction: 1.0,
        },
        n_folds: 2,
        grid_n: 5,
    };
    let view = pareto_search(&req).unwrap();
    assert_eq!(view.points.len(), 8);
    let pts: Vec<Objectives> = view
        .points
        .iter()
        .map(|p| Objectives { coverage: p.coverage, one_minus_mae: p.one_minus_mae })
        .collect();
    assert_eq!(pareto_front(&pts), view.front);
    assert_eq!(view.points.iter().filter(|p| p.front).count(), view.front.len());
}
