use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use resbemf::metrics::{Evaluation, RankingParams, ThresholdGrid};
use resbemf::persist::{model_from_str, save_model};
use resbemf::{FactorModel, Hyperparams, RatingsDataset, ScoreSet};

fn resbemf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resbemf")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TOY: &str = "u1\ti1\t5\t881250949\nu1\ti2\t3\t881250950\nu2\ti1\t4\t881250951\nu2\ti3\t1\t881250952\nu3\ti2\t2\t881250953\nu3\ti3\t5\t881250954\n";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// A model that puts almost all mass on the score each test pair received.
fn oracle_model(dir: &Path) -> String {
    let scores = ScoreSet::integer_range(1, 5).unwrap();
    let ds = RatingsDataset::from_triples(
        scores.clone(),
        TOY.lines().map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[1].to_string(), f[2].parse::<f64>().unwrap())
        }),
    )
    .unwrap();
    // k = 6: one factor per user-item pair slot is enough to separate them
    let (nu, ni, d, k) = (ds.n_users(), ds.n_items(), 5, ds.len());
    let mut p = vec![0.0; nu * d * k];
    let mut q = vec![0.0; ni * d * k];
    for (f, r) in ds.ratings().iter().enumerate() {
        let s = scores.index(r.value).unwrap();
        p[(r.user * d + s) * k + f] = 6.0;
        q[(r.item * d + s) * k + f] = 6.0;
    }
    let hp = Hyperparams {
        k,
        gamma: 0.0,
        eta: 0.01,
        m: 1,
        seed: 0,
    };
    let model = FactorModel::from_parts(scores, hp, ds.user_ids().to_vec(), ds.item_ids().to_vec(), p, q).unwrap();
    let path = dir.join("oracle.json");
    save_model(&model, fs::File::create(&path).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn stats_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "r.tsv", TOY);
    let out = resbemf(&["stats", "--input", &input]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_users"], 3);
    assert_eq!(v["n_items"], 3);
    assert_eq!(v["n_ratings"], 6);
}

#[test]
fn stats_with_held_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "train.tsv", TOY);
    let test = write(dir.path(), "test.tsv", "u4\ti1\t2\nu1\ti3\t4\n");
    let out = resbemf(&["stats", "--input", &input, "--test", &test]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_ratings"], 8);
    assert_eq!(v["n_test_ratings"], 2);
    assert_eq!(v["n_users"], 4);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let out = resbemf(&["stats", "--input", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nope.tsv"));

    let empty = write(dir.path(), "empty.tsv", "");
    let out = resbemf(&["stats", "--input", &empty]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no ratings"));

    let bad = write(dir.path(), "bad.tsv", "u1\ti1\t5\nu2\ti2\tfive\n");
    let out = resbemf(&["stats", "--input", &bad]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"));

    let input = write(dir.path(), "r.tsv", TOY);
    let out = resbemf(&["fit", "--input", &input, "--gamma", "-1", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "r.tsv", TOY);
    let out = resbemf(&["fit", "--input", &input, "--gamma", "10", "--eta", "1000", "--m", "50", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn split_writes_partitions_and_folds() {
    let dir = tempfile::tempdir().unwrap();
    let lines: String = (0..50).map(|j| format!("u{}\ti{j}\t{}\n", j % 5, j % 5 + 1)).collect();
    let input = write(dir.path(), "r.tsv", &lines);
    let out_dir = dir.path().join("out");
    let out = resbemf(&["split", "--input", &input, "--test-fraction", "0.2", "--folds", "4", "--seed", "3", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let count = |name: &str| fs::read_to_string(out_dir.join(name)).unwrap().lines().count();
    assert_eq!(count("train.tsv"), 40);
    assert_eq!(count("test.tsv"), 10);
    assert_eq!(count("partition.csv"), 51);
    assert_eq!(count("folds.csv"), 41);
}

#[test]
fn fit_round_trips_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "r.tsv", TOY);
    let d = dir.path().to_str().unwrap();
    let out = resbemf(&["fit", "--input", &input, "--k", "2", "--m", "25", "--eta", "0.01", "--out-dir", d]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("model.json")).unwrap();
    let model = model_from_str(&text).unwrap();
    let mut again = Vec::new();
    save_model(&model, &mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), text);

    let model_path = dir.path().join("model.json");
    let out = resbemf(&["predict", "--model", model_path.to_str().unwrap(), "--user", "u1", "--item", "i3", "--theta", "0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["cold_start"], false);
    assert_eq!(v["probs"].as_array().unwrap().len(), 5);
    assert!(v["prediction"].is_number());

    let out = resbemf(&["predict", "--model", model_path.to_str().unwrap(), "--user", "nobody", "--item", "i3", "--theta", "0.5"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["cold_start"], true);
    assert_eq!(v["reliability"], 0.2);
    assert!(v["prediction"].is_null());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "r.tsv", TOY);
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{"input": "r.tsv", "k": 2, "m": 5, "eta": 0.01, "seed": 4, "out_dir": "from-config"}"#,
    );
    let out = resbemf(&["--config", &cfg, "fit", "--k", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let model = model_from_str(&fs::read_to_string(dir.path().join("from-config/model.json")).unwrap()).unwrap();
    assert_eq!(model.k(), 3);
    assert_eq!(model.hyperparams().m, 5);
    assert_eq!(model.hyperparams().seed, 4);
}

#[test]
fn evaluate_perfect_model() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "r.tsv", TOY);
    let model = oracle_model(dir.path());
    let out_dir = dir.path().join("eval");
    let out = resbemf(&["evaluate", "--model", &model, "--input", &input, "--theta", "0", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta,mae,accuracy,coverage,n_predicted");
    assert_eq!(lines.len(), 21);
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[1].is_empty() || cells[1] == "0.000000", "{line}");
    }
    assert_eq!(lines[1], "0.000000,0.000000,1.000000,1.000000,6");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["grid_n"], 20);
    assert_eq!(summary["ranking"]["map"], 1.0);
}

#[test]
fn evaluate_matches_library_report() {
    let dir = tempfile::tempdir().unwrap();
    let train = write(dir.path(), "train.tsv", TOY);
    let test = write(dir.path(), "test.tsv", "u1\ti3\t4\nu2\ti2\t2\nu3\ti1\t3\nu9\ti1\t1\n");
    let d = dir.path().to_str().unwrap();
    assert_eq!(code(&resbemf(&["fit", "--input", &train, "--k", "2", "--m", "40", "--eta", "0.02", "--out-dir", d])), 0);
    let model_path = dir.path().join("model.json");
    let out = resbemf(&["evaluate", "--model", model_path.to_str().unwrap(), "--input", &test, "--grid-n", "5", "--out-dir", d]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let model = model_from_str(&fs::read_to_string(&model_path).unwrap()).unwrap();
    let ds = RatingsDataset::from_triples(
        model.score_set().clone(),
        [("u1", "i3", 4.0), ("u2", "i2", 2.0), ("u3", "i1", 3.0), ("u9", "i1", 1.0)],
    )
    .unwrap();
    let report = Evaluation::new(&model, &ds, ds.ratings())
        .report(&ThresholdGrid::new(5).unwrap(), RankingParams::defaults_for(model.score_set()));
    let mut want = Vec::new();
    report.write_csv(&mut want).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("metrics.csv")).unwrap(), String::from_utf8(want).unwrap());
    assert_eq!(report.n_cold_start, 1);
}

#[test]
fn search_single_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let lines: String = (0..60).map(|j| format!("u{}\ti{}\t{}\n", j % 6, j / 6, (j * 7) % 5 + 1)).collect();
    let input = write(dir.path(), "r.tsv", &lines);
    let space = write(dir.path(), "space.json", r#"{"k": [2], "gamma": [0.1], "eta": [0.01], "m": [5]}"#);
    let d = dir.path().to_str().unwrap();
    let out = resbemf(&["search", "--input", &input, "--space", &space, "--n-folds", "3", "--out-dir", d]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let front = fs::read_to_string(dir.path().join("front.csv")).unwrap();
    assert_eq!(front.lines().count(), 2);
    assert!(front.lines().next().unwrap().starts_with("index,k,gamma,eta,m,seed,status,fold0_coverage"));
    let svg = fs::read_to_string(dir.path().join("scatter.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn search_with_only_failing_candidates_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let lines: String = (0..30).map(|j| format!("u{}\ti{}\t{}\n", j % 5, j / 5, j % 5 + 1)).collect();
    let input = write(dir.path(), "r.tsv", &lines);
    let space = write(dir.path(), "space.json", r#"{"k": [2], "gamma": [10.0], "eta": [1000.0], "m": [50]}"#);
    let out = resbemf(&["search", "--input", &input, "--space", &space, "--n-folds", "2", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}
