//! Rating ingestion, train/test partitioning, cross-validation folds and
//! dataset statistics.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scores::ScoreSet;
use crate::seed;

/// One observed rating in dataset index space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Test => "test",
        }
    }
}

/// Sparse user x item rating matrix. Absent pairs are unrated.
#[derive(Debug, Clone)]
pub struct RatingsDataset {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    ratings: Vec<Rating>,
    partition: Vec<Partition>,
    score_set: ScoreSet,
}

impl RatingsDataset {
    pub fn empty(score_set: ScoreSet) -> Self {
        Self {
            user_ids: Vec::new(),
            item_ids: Vec::new(),
            user_lookup: HashMap::new(),
            item_lookup: HashMap::new(),
            ratings: Vec::new(),
            partition: Vec::new(),
            score_set,
        }
    }

    /// Builds a dataset from `(user, item, rating)` triples, all tagged train.
    /// Identifiers are indexed in order of first appearance; a repeated pair
    /// overwrites the earlier value in place.
    pub fn from_triples<I, U, T>(score_set: ScoreSet, triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (U, T, f64)>,
        U: Into<String>,
        T: Into<String>,
    {
        let mut builder = Builder::new(score_set);
        for (u, i, r) in triples {
            builder.push(u.into(), i.into(), r)?;
        }
        Ok(builder.finish())
    }

    pub fn score_set(&self) -> &ScoreSet {
        &self.score_set
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_id(&self, user: usize) -> &str {
        &self.user_ids[user]
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.item_ids[item]
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_lookup.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_lookup.get(id).copied()
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn partition(&self) -> &[Partition] {
        &self.partition
    }

    pub fn ratings_in(&self, part: Partition) -> Vec<Rating> {
        self.ratings
            .iter()
            .zip(&self.partition)
            .filter(|(_, &p)| p == part)
            .map(|(r, _)| *r)
            .collect()
    }

    pub fn train(&self) -> Vec<Rating> {
        self.ratings_in(Partition::Train)
    }

    pub fn test(&self) -> Vec<Rating> {
        self.ratings_in(Partition::Test)
    }

    /// Indices (into `ratings()`) of the ratings tagged `part`.
    pub fn indices_in(&self, part: Partition) -> Vec<usize> {
        self.partition
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == part)
            .map(|(n, _)| n)
            .collect()
    }

    pub fn with_partition(&self, partition: Vec<Partition>) -> Result<Self> {
        if partition.len() != self.ratings.len() {
            return Err(Error::InvalidArgument(format!(
                "partition has {} tags for {} ratings",
                partition.len(),
                self.ratings.len()
            )));
        }
        Ok(Self {
            partition,
            ..self.clone()
        })
    }

    pub fn stats(&self) -> DatasetStats {
        let n_test = self
            .partition
            .iter()
            .filter(|&&p| p == Partition::Test)
            .count();
        DatasetStats {
            n_users: self.n_users(),
            n_items: self.n_items(),
            n_ratings: self.len(),
            n_train_ratings: self.len() - n_test,
            n_test_ratings: n_test,
            score_range: (self.score_set.min(), self.score_set.max()),
            score_values: self.score_set.values().to_vec(),
        }
    }

    /// Writes `user<delim>item<delim>rating` lines for `ratings`.
    pub fn write_ratings<W: Write>(
        &self,
        ratings: &[Rating],
        delimiter: &str,
        mut out: W,
    ) -> Result<()> {
        for r in ratings {
            writeln!(
                out,
                "{}{delimiter}{}{delimiter}{}",
                self.user_ids[r.user], self.item_ids[r.item], r.value
            )?;
        }
        Ok(())
    }

    /// CSV with columns `user,item,rating,partition`.
    pub fn write_partition_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["user", "item", "rating", "partition"])?;
        for (r, p) in self.ratings.iter().zip(&self.partition) {
            w.write_record([
                self.user_ids[r.user].as_str(),
                self.item_ids[r.item].as_str(),
                &r.value.to_string(),
                p.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

struct Builder {
    score_set: Option<ScoreSet>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    ratings: Vec<Rating>,
    pair_lookup: HashMap<(usize, usize), usize>,
    duplicates: usize,
}

impl Builder {
    fn new(score_set: ScoreSet) -> Self {
        Self::with_optional(Some(score_set))
    }

    fn with_optional(score_set: Option<ScoreSet>) -> Self {
        Self {
            score_set,
            user_ids: Vec::new(),
            item_ids: Vec::new(),
            user_lookup: HashMap::new(),
            item_lookup: HashMap::new(),
            ratings: Vec::new(),
            pair_lookup: HashMap::new(),
            duplicates: 0,
        }
    }

    fn push(&mut self, user: String, item: String, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        if let Some(s) = &self.score_set {
            if !s.contains(value) {
                return Err(Error::UnknownScore(value));
            }
        }
        let u = intern(&mut self.user_ids, &mut self.user_lookup, user);
        let i = intern(&mut self.item_ids, &mut self.item_lookup, item);
        let rating = Rating {
            user: u,
            item: i,
            value,
        };
        match self.pair_lookup.get(&(u, i)) {
            Some(&slot) => {
                self.ratings[slot] = rating;
                self.duplicates += 1;
            }
            None => {
                self.pair_lookup.insert((u, i), self.ratings.len());
                self.ratings.push(rating);
            }
        }
        Ok(())
    }

    fn finish_inferred(self) -> Result<(RatingsDataset, usize)> {
        let score_set = match self.score_set.clone() {
            Some(s) => s,
            None => ScoreSet::infer(self.ratings.iter().map(|r| r.value))?,
        };
        let duplicates = self.duplicates;
        Ok((self.into_dataset(score_set), duplicates))
    }

    fn finish(self) -> RatingsDataset {
        let score_set = self.score_set.clone().expect("builder has a score set");
        self.into_dataset(score_set)
    }

    fn into_dataset(self, score_set: ScoreSet) -> RatingsDataset {
        let n = self.ratings.len();
        RatingsDataset {
            user_ids: self.user_ids,
            item_ids: self.item_ids,
            user_lookup: self.user_lookup,
            item_lookup: self.item_lookup,
            ratings: self.ratings,
            partition: vec![Partition::Train; n],
            score_set,
        }
    }
}

fn intern(ids: &mut Vec<String>, lookup: &mut HashMap<String, usize>, id: String) -> usize {
    if let Some(&n) = lookup.get(&id) {
        return n;
    }
    let n = ids.len();
    lookup.insert(id.clone(), n);
    ids.push(id);
    n
}

/// Field separator of a ratings file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Delimiter {
    Tab,
    Comma,
    /// Any run of ASCII whitespace.
    Whitespace,
    Literal(String),
}

impl Delimiter {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Tab => line.split('\t').collect(),
            Delimiter::Comma => line.split(',').collect(),
            Delimiter::Whitespace => line.split_ascii_whitespace().collect(),
            Delimiter::Literal(s) => line.split(s.as_str()).collect(),
        }
    }

    /// Separator used when writing files in this format.
    pub fn as_output(&self) -> &str {
        match self {
            Delimiter::Tab | Delimiter::Whitespace => "\t",
            Delimiter::Comma => ",",
            Delimiter::Literal(s) => s,
        }
    }
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tab" | "\t" | "\\t" => Delimiter::Tab,
            "comma" | "," => Delimiter::Comma,
            "whitespace" | "space" | " " => Delimiter::Whitespace,
            "" => return Err(Error::InvalidArgument("empty delimiter".into())),
            other => Delimiter::Literal(other.to_string()),
        })
    }
}

/// How to read a delimiter-separated ratings file.
#[derive(Debug, Clone)]
pub struct FormatSpec {
    pub delimiter: Delimiter,
    /// Zero-based column positions of user, item and rating.
    pub columns: [usize; 3],
    pub header: bool,
    /// When set, ratings outside this set are rejected; otherwise the set is
    /// inferred from the data.
    pub score_set: Option<ScoreSet>,
}

impl Default for FormatSpec {
    fn default() -> Self {
        Self {
            delimiter: Delimiter::Tab,
            columns: [0, 1, 2],
            header: false,
            score_set: None,
        }
    }
}

impl FormatSpec {
    pub fn csv() -> Self {
        Self {
            delimiter: Delimiter::Comma,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedRatings {
    pub dataset: RatingsDataset,
    /// Number of lines that repeated an earlier (user, item) pair.
    pub duplicates: usize,
}

pub fn parse_ratings<R: BufRead>(reader: R, format: &FormatSpec) -> Result<ParsedRatings> {
    let mut builder = Builder::with_optional(format.score_set.clone());
    let needed = format.columns.iter().copied().max().unwrap_or(0) + 1;
    let mut header_pending = format.header;

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields = format.delimiter.split(trimmed);
        if fields.len() < needed {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least {needed} fields, found {}", fields.len()),
            });
        }
        let [uc, ic, rc] = format.columns;
        let user = fields[uc].trim();
        let item = fields[ic].trim();
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty user or item identifier".into(),
            });
        }
        let raw = fields[rc].trim();
        let value: f64 = raw.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("rating {raw:?} is not a number"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("rating {raw:?} is not finite"),
            });
        }
        builder
            .push(user.to_string(), item.to_string(), value)
            .map_err(|e| match e {
                Error::UnknownScore(v) => Error::Parse {
                    line: line_no,
                    message: format!("rating {v} is not in the score set"),
                },
                other => other,
            })?;
    }

    if builder.ratings.is_empty() {
        return Err(Error::NoRatings);
    }
    let (dataset, duplicates) = builder.finish_inferred()?;
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate (user, item) lines; kept the last value of each");
    }
    Ok(ParsedRatings {
        dataset,
        duplicates,
    })
}

/// Table-1 style dataset summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub n_train_ratings: usize,
    pub n_test_ratings: usize,
    pub score_range: (f64, f64),
    pub score_values: Vec<f64>,
}

/// Tags `round(test_fraction * n)` ratings as test: the ratings are shuffled
/// with a stream seeded by `seed` and the prefix of the permutation is cut.
pub fn split(dataset: &RatingsDataset, test_fraction: f64, seed: u64) -> Result<RatingsDataset> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if dataset.is_empty() {
        return Err(Error::NoRatings);
    }
    let n = dataset.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut partition = vec![Partition::Train; n];
    for &idx in &order[..n_test] {
        partition[idx] = Partition::Test;
    }
    dataset.with_partition(partition)
}

/// Assignment of every train rating to one of `n_folds` folds.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    n_folds: usize,
    /// `(rating index, fold)`, sorted by rating index.
    entries: Vec<(usize, usize)>,
}

impl FoldAssignment {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn fold_of(&self, rating_index: usize) -> Option<usize> {
        self.entries
            .binary_search_by_key(&rating_index, |&(r, _)| r)
            .ok()
            .map(|pos| self.entries[pos].1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &(_, f) in &self.entries {
            sizes[f] += 1;
        }
        sizes
    }

    /// Ratings held out in `fold`.
    pub fn held_out(&self, dataset: &RatingsDataset, fold: usize) -> Vec<Rating> {
        self.select(dataset, |f| f == fold)
    }

    /// Train ratings outside `fold`.
    pub fn training(&self, dataset: &RatingsDataset, fold: usize) -> Vec<Rating> {
        self.select(dataset, |f| f != fold)
    }

    fn select(&self, dataset: &RatingsDataset, keep: impl Fn(usize) -> bool) -> Vec<Rating> {
        self.entries
            .iter()
            .filter(|&&(_, f)| keep(f))
            .map(|&(r, _)| dataset.ratings()[r])
            .collect()
    }

    /// CSV with columns `user,item,rating,fold`.
    pub fn write_csv<W: Write>(&self, dataset: &RatingsDataset, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["user", "item", "rating", "fold"])?;
        for &(r, f) in &self.entries {
            let rating = dataset.ratings()[r];
            w.write_record([
                dataset.user_id(rating.user),
                dataset.item_id(rating.item),
                &rating.value.to_string(),
                &f.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shuffles the train ratings and deals them round-robin into `n_folds`.
pub fn make_folds(dataset: &RatingsDataset, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {n_folds}"
        )));
    }
    let mut members = dataset.indices_in(Partition::Train);
    if members.len() < n_folds {
        return Err(Error::InvalidArgument(format!(
            "{} train ratings cannot fill {n_folds} folds",
            members.len()
        )));
    }
    members.shuffle(&mut seed::rng(seed));
    let mut entries: Vec<(usize, usize)> = members
        .into_iter()
        .enumerate()
        .map(|(pos, r)| (r, pos % n_folds))
        .collect();
    entries.sort_unstable();
    Ok(FoldAssignment { n_folds, entries })
}
