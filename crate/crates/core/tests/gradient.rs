use rand::Rng;
use resbemf::baselines::{pmf_loss, pmf_loss_gradient, PmfModel};
use resbemf::model::{log_likelihood, objective_gradient, rating_gradient, training_objective};
use resbemf::seed;
use resbemf::{FactorModel, Hyperparams, Rating, ScoreSet};

const STEP: f64 = 1e-5;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn random_model(rng: &mut impl Rng, n_users: usize, n_items: usize, d: usize, k: usize, gamma: f64) -> FactorModel {
    let scores = ScoreSet::integer_range(1, d as i32).unwrap();
    let hp = Hyperparams {
        k,
        gamma,
        eta: 0.01,
        m: 1,
        seed: 0,
    };
    let p = (0..n_users * d * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let q = (0..n_items * d * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FactorModel::from_parts(
        scores,
        hp,
        (0..n_users).map(|u| format!("u{u}")).collect(),
        (0..n_items).map(|i| format!("i{i}")).collect(),
        p,
        q,
    )
    .unwrap()
}

fn with_factors(model: &FactorModel, p: Vec<f64>, q: Vec<f64>) -> FactorModel {
    FactorModel::from_parts(
        model.score_set().clone(),
        *model.hyperparams(),
        model.user_ids().to_vec(),
        model.item_ids().to_vec(),
        p,
        q,
    )
    .unwrap()
}

/// Central differences of `f` over every entry of P then Q.
fn numeric(model: &FactorModel, f: impl Fn(&FactorModel) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut gp = Vec::new();
    for j in 0..model.p().len() {
        let mut plus = model.p().to_vec();
        let mut minus = model.p().to_vec();
        plus[j] += STEP;
        minus[j] -= STEP;
        let hi = f(&with_factors(model, plus, model.q().to_vec()));
        let lo = f(&with_factors(model, minus, model.q().to_vec()));
        gp.push((hi - lo) / (2.0 * STEP));
    }
    let mut gq = Vec::new();
    for j in 0..model.q().len() {
        let mut plus = model.q().to_vec();
        let mut minus = model.q().to_vec();
        plus[j] += STEP;
        minus[j] -= STEP;
        let hi = f(&with_factors(model, model.p().to_vec(), plus));
        let lo = f(&with_factors(model, model.p().to_vec(), minus));
        gq.push((hi - lo) / (2.0 * STEP));
    }
    (gp, gq)
}

#[test]
fn rating_gradient_matches_central_differences() {
    let mut rng = seed::rng(11);
    for _ in 0..100 {
        let (n_users, n_items) = (rng.gen_range(1..=5), rng.gen_range(1..=7));
        let gamma = if rng.gen::<bool>() { 0.0 } else { rng.gen_range(0.0..0.3) };
        let model = random_model(&mut rng, n_users, n_items, 5, 3, gamma);
        let (u, i) = (rng.gen_range(0..n_users), rng.gen_range(0..n_items));
        let value = rng.gen_range(1..=5) as f64;
        let rating = [Rating { user: u, item: i, value }];

        let analytic = rating_gradient(&model, u, i, value).unwrap();
        let (gp, gq) = numeric(&model, |m| log_likelihood(m, &rating).unwrap());
        let block = model.d() * model.k();
        let mut a = analytic.user.clone();
        a.extend(&analytic.item);
        let mut n = gp[u * block..(u + 1) * block].to_vec();
        n.extend(&gq[i * block..(i + 1) * block]);
        assert!(rel_err(&a, &n) < 1e-4, "relative error {}", rel_err(&a, &n));

        // other users' and items' blocks only see the global penalty
        for (j, g) in gp.iter().enumerate() {
            if j / block != u {
                assert!((g + gamma * model.p()[j]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn observed_channel_gradient_follows_q() {
    let mut rng = seed::rng(3);
    let model = random_model(&mut rng, 3, 4, 3, 2, 0.0);
    let g = rating_gradient(&model, 1, 2, 2.0).unwrap();
    let probs = resbemf::predict_distribution(&model, 1, 2).unwrap().probs;
    let s = 1;
    for f in 0..2 {
        let q = model.item_block(2)[s * 2 + f];
        assert!((g.user[s * 2 + f] - (1.0 - probs[s]) * q).abs() < 1e-12);
    }
}

#[test]
fn objective_gradient_matches_central_differences() {
    let mut rng = seed::rng(5);
    for _ in 0..20 {
        let model = random_model(&mut rng, 3, 4, 3, 2, 0.15);
        let ratings: Vec<Rating> = (0..6)
            .map(|_| Rating {
                user: rng.gen_range(0..3),
                item: rng.gen_range(0..4),
                value: rng.gen_range(1..=3) as f64,
            })
            .collect();
        let (ap, aq) = objective_gradient(&model, &ratings).unwrap();
        let (np, nq) = numeric(&model, |m| training_objective(m, &ratings).unwrap());
        let mut a = ap;
        a.extend(aq);
        let mut n = np;
        n.extend(nq);
        assert!(rel_err(&a, &n) < 1e-4);
    }
}

#[test]
fn pmf_loss_gradient_matches_central_differences() {
    let mut rng = seed::rng(8);
    let scores = ScoreSet::integer_range(1, 5).unwrap();
    let hp = Hyperparams {
        k: 2,
        gamma: 0.1,
        eta: 0.01,
        m: 1,
        seed: 0,
    };
    let users: Vec<String> = (0..2).map(|u| format!("u{u}")).collect();
    let items: Vec<String> = (0..3).map(|i| format!("i{i}")).collect();
    let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let q: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let make = |p: Vec<f64>, q: Vec<f64>| PmfModel::from_parts(scores.clone(), hp, users.clone(), items.clone(), p, q).unwrap();
    let ratings = [
        Rating { user: 0, item: 0, value: 4.0 },
        Rating { user: 0, item: 2, value: 1.0 },
        Rating { user: 1, item: 1, value: 5.0 },
    ];
    let (gp, gq) = pmf_loss_gradient(&make(p.clone(), q.clone()), &ratings);
    let mut a = gp;
    a.extend(gq);
    let mut n = Vec::new();
    for j in 0..p.len() {
        let (mut hi, mut lo) = (p.clone(), p.clone());
        hi[j] += STEP;
        lo[j] -= STEP;
        n.push((pmf_loss(&make(hi, q.clone()), &ratings) - pmf_loss(&make(lo, q.clone()), &ratings)) / (2.0 * STEP));
    }
    for j in 0..q.len() {
        let (mut hi, mut lo) = (q.clone(), q.clone());
        hi[j] += STEP;
        lo[j] -= STEP;
        n.push((pmf_loss(&make(p.clone(), hi), &ratings) - pmf_loss(&make(p.clone(), lo), &ratings)) / (2.0 * STEP));
    }
    assert!(rel_err(&a, &n) < 1e-4);
}
