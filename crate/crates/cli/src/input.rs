use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use resbemf::data::{parse_ratings, Delimiter, FormatSpec, Partition};
use resbemf::{RatingsDataset, ScoreSet};

use crate::error::CliError;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_ratings(path: &Path, format: &FormatSpec) -> Result<RatingsDataset, CliError> {
    let parsed = parse_ratings(open(path)?, format).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok(parsed.dataset)
}

/// Ratings of `train`, plus those of `test` tagged as the test partition.
pub fn read_partitioned(train: &Path, test: Option<&Path>, format: &FormatSpec) -> Result<RatingsDataset, CliError> {
    let train_ds = read_ratings(train, format)?;
    let Some(test) = test else {
        return Ok(train_ds);
    };
    let test_ds = read_ratings(test, format)?;
    let scores = match &format.score_set {
        Some(s) => s.clone(),
        None => ScoreSet::infer(
            train_ds
                .score_set()
                .values()
                .iter()
                .chain(test_ds.score_set().values())
                .copied(),
        )?,
    };
    let triples = |ds: &RatingsDataset| -> Vec<(String, String, f64)> {
        ds.ratings()
            .iter()
            .map(|r| (ds.user_id(r.user).to_string(), ds.item_id(r.item).to_string(), r.value))
            .collect()
    };
    let held_out: HashSet<(String, String)> = triples(&test_ds).into_iter().map(|(u, i, _)| (u, i)).collect();
    let mut all = triples(&train_ds);
    all.extend(triples(&test_ds));
    let merged = RatingsDataset::from_triples(scores, all)?;
    let tags = merged
        .ratings()
        .iter()
        .map(|r| {
            let key = (merged.user_id(r.user).to_string(), merged.item_id(r.item).to_string());
            if held_out.contains(&key) {
                Partition::Test
            } else {
                Partition::Train
            }
        })
        .collect();
    Ok(merged.with_partition(tags)?)
}

/// `(user, item)` pairs from the first two columns of the user and item
/// positions of `format`.
pub fn read_pairs(path: &Path, format: &FormatSpec) -> Result<Vec<(String, String)>, CliError> {
    let [uc, ic, _] = format.columns;
    let needed = uc.max(ic) + 1;
    let mut out = Vec::new();
    let mut skip = format.header;
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        if skip {
            skip = false;
            continue;
        }
        let fields: Vec<&str> = match &format.delimiter {
            Delimiter::Whitespace => line.split_ascii_whitespace().collect(),
            d => line.split(d.as_output()).collect(),
        };
        if fields.len() < needed {
            return Err(CliError::Input(format!(
                "{}: line {}: expected at least {needed} fields",
                path.display(),
                n + 1
            )));
        }
        out.push((fields[uc].trim().to_string(), fields[ic].trim().to_string()));
    }
    Ok(out)
}
