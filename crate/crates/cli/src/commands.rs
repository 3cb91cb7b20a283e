use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use resbemf::baselines::pmf_fit_with;
use resbemf::data::{make_folds, split, Delimiter, FormatSpec, Partition};
use resbemf::metrics::{Evaluation, Predictor, RankingParams, ThresholdGrid};
use resbemf::persist::{self, PMF, RESBEMF};
use resbemf::search::{random_search, ModelKind, SearchConfig};
use resbemf::train::{fit_with, FitOptions};
use resbemf::{predict_distribution, FactorModel, Hyperparams, PmfModel, RatingsDataset, ScoreSet};

use crate::config::{load_space, RunConfig};
use crate::error::CliError;
use crate::input::{read_pairs, read_partitioned, read_ratings};
use crate::{svg, Cli, Command, Format, ModelArgs, ModelType, Shared};

const DEFAULT_SEED: u64 = 0;
const DEFAULT_TEST_FRACTION: f64 = 0.2;
const DEFAULT_FOLDS: usize = 5;
// a Table-2 configuration that trains well on MovieLens 100K
const DEFAULT_HP: (usize, f64, f64, usize) = (6, 0.10, 0.003, 100);

/// Flags resolved over the config file.
struct Ctx {
    shared: Shared,
    cfg: RunConfig,
}

impl Ctx {
    fn input(&self) -> Result<PathBuf, CliError> {
        self.shared
            .input
            .clone()
            .or_else(|| self.cfg.input.clone())
            .ok_or_else(|| CliError::Input("--input is required".into()))
    }

    fn test(&self) -> Option<PathBuf> {
        self.shared.test.clone().or_else(|| self.cfg.test.clone())
    }

    fn format(&self) -> Result<FormatSpec, CliError> {
        let preset = match self.shared.format {
            Some(f) => Some(f),
            None => match self.cfg.format.as_deref() {
                None => None,
                Some("tsv") => Some(Format::Tsv),
                Some("csv") => Some(Format::Csv),
                Some("whitespace") => Some(Format::Whitespace),
                Some(other) => return Err(CliError::Input(format!("unknown format {other:?}"))),
            },
        };
        let mut spec = FormatSpec {
            delimiter: match preset {
                Some(Format::Csv) => Delimiter::Comma,
                Some(Format::Whitespace) => Delimiter::Whitespace,
                Some(Format::Tsv) | None => Delimiter::Tab,
            },
            ..FormatSpec::default()
        };
        if let Some(d) = self.shared.delimiter.as_ref().or(self.cfg.delimiter.as_ref()) {
            spec.delimiter = d.parse()?;
        }
        spec.header = self.shared.header.or(self.cfg.header).unwrap_or(false);
        if let Some(cols) = self.shared.columns.as_ref().or(self.cfg.columns.as_ref()) {
            spec.columns = cols
                .as_slice()
                .try_into()
                .map_err(|_| CliError::Input("--columns takes exactly three positions".into()))?;
        }
        if let Some(values) = self.shared.scores.as_ref().or(self.cfg.scores.as_ref()) {
            spec.score_set = Some(ScoreSet::new(values.clone())?);
        }
        Ok(spec)
    }

    fn seed(&self) -> u64 {
        self.shared.seed.or(self.cfg.seed).unwrap_or(DEFAULT_SEED)
    }

    fn threads(&self) -> Result<usize, CliError> {
        match self.shared.threads.or(self.cfg.threads).unwrap_or(1) {
            0 => Err(CliError::Input("--threads must be at least 1".into())),
            n => Ok(n),
        }
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .shared
            .out_dir
            .clone()
            .or_else(|| self.cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn grid(&self) -> Result<ThresholdGrid, CliError> {
        let n = self
            .shared
            .grid_n
            .or(self.cfg.grid_n)
            .unwrap_or(ThresholdGrid::DEFAULT_POINTS);
        Ok(ThresholdGrid::new(n)?)
    }

    fn theta(&self) -> Result<f64, CliError> {
        let theta = self.shared.theta.or(self.cfg.theta).unwrap_or(0.0);
        if !(0.0..=1.0).contains(&theta) {
            return Err(CliError::Input(format!("--theta must lie in [0, 1], got {theta}")));
        }
        Ok(theta)
    }

    fn ranking(&self, scores: &ScoreSet) -> Result<RankingParams, CliError> {
        let defaults = RankingParams::defaults_for(scores);
        let params = RankingParams {
            tau: self.shared.tau.or(self.cfg.tau).unwrap_or(defaults.tau),
            n_top: self.shared.top_n.or(self.cfg.top_n).unwrap_or(defaults.n_top),
            theta: self.theta()?,
        };
        params.validate(scores)?;
        Ok(params)
    }

    fn model_type(&self, flag: Option<ModelType>) -> Result<ModelType, CliError> {
        match (flag, self.cfg.model_type.as_deref()) {
            (Some(t), _) => Ok(t),
            (None, None | Some("resbemf")) => Ok(ModelType::Resbemf),
            (None, Some("pmf")) => Ok(ModelType::Pmf),
            (None, Some(other)) => Err(CliError::Input(format!("unknown model_type {other:?}"))),
        }
    }

    fn hyperparams(&self, args: &ModelArgs) -> Result<Hyperparams, CliError> {
        let hp = Hyperparams {
            k: args.k.or(self.cfg.k).unwrap_or(DEFAULT_HP.0),
            gamma: args.gamma.or(self.cfg.gamma).unwrap_or(DEFAULT_HP.1),
            eta: args.eta.or(self.cfg.eta).unwrap_or(DEFAULT_HP.2),
            m: args.m.or(self.cfg.m).unwrap_or(DEFAULT_HP.3),
            seed: self.seed(),
        };
        hp.validate()?;
        Ok(hp)
    }

    fn model_path(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.cfg.model.clone())
            .ok_or_else(|| CliError::Input("--model is required".into()))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.shared.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx { shared: cli.shared, cfg };
    match cli.command {
        Command::Stats => stats(&ctx),
        Command::Split { test_fraction, folds } => split_cmd(&ctx, test_fraction, folds),
        Command::Fit { model, out } => fit_cmd(&ctx, &model, out),
        Command::Predict { model, user, item, pairs } => predict_cmd(&ctx, model, user.zip(item), pairs),
        Command::Evaluate { model } => evaluate_cmd(&ctx, model),
        Command::Search {
            space,
            n_folds,
            model_type,
        } => search_cmd(&ctx, space, n_folds, model_type),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn stats(ctx: &Ctx) -> Result<(), CliError> {
    let ds = read_partitioned(&ctx.input()?, ctx.test().as_deref(), &ctx.format()?)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, &ds.stats()).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn split_cmd(ctx: &Ctx, fraction: Option<f64>, folds: Option<usize>) -> Result<(), CliError> {
    let format = ctx.format()?;
    let ds = read_ratings(&ctx.input()?, &format)?;
    let fraction = fraction.or(ctx.cfg.test_fraction).unwrap_or(DEFAULT_TEST_FRACTION);
    let seed = ctx.seed();
    let tagged = split(&ds, fraction, seed)?;
    let dir = ctx.out_dir()?;
    let delim = format.delimiter.as_output();
    for (name, part) in [("train.tsv", Partition::Train), ("test.tsv", Partition::Test)] {
        let mut out = create(&dir.join(name))?;
        tagged.write_ratings(&tagged.ratings_in(part), delim, &mut out)?;
        out.flush()?;
    }
    let mut out = create(&dir.join("partition.csv"))?;
    tagged.write_partition_csv(&mut out)?;
    out.flush()?;
    if let Some(n) = folds.or(ctx.cfg.folds) {
        let assignment = make_folds(&tagged, n, seed)?;
        let mut out = create(&dir.join("folds.csv"))?;
        assignment.write_csv(&tagged, &mut out)?;
        out.flush()?;
    }
    let st = tagged.stats();
    eprintln!(
        "{} train + {} test ratings written to {}",
        st.n_train_ratings,
        st.n_test_ratings,
        dir.display()
    );
    Ok(())
}

fn fit_cmd(ctx: &Ctx, args: &ModelArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let kind = ctx.model_type(args.model_type)?;
    let hp = ctx.hyperparams(args)?;
    let threads = ctx.threads()?;
    let ds = read_ratings(&ctx.input()?, &ctx.format()?)?;
    let train = ds.train();
    let path = match out {
        Some(p) => p,
        None => ctx.out_dir()?.join("model.json"),
    };
    let mut file = create(&path)?;
    match kind {
        ModelType::Resbemf => {
            let opts = FitOptions {
                threads,
                track_objective: log::log_enabled!(log::Level::Info),
            };
            let (model, trace) = fit_with(&ds, &train, &hp, &opts)?;
            if let Some(last) = trace.epochs.last().and_then(|e| e.objective) {
                log::info!("training objective {:?} -> {last}", trace.initial_objective);
            }
            persist::save_model(&model, &mut file)?;
        }
        ModelType::Pmf => {
            let (model, trace) = pmf_fit_with(&ds, &train, &hp, log::log_enabled!(log::Level::Info))?;
            if let (Some(a), Some(b)) = (trace.losses.first(), trace.losses.last()) {
                log::info!("training loss {a} -> {b}");
            }
            persist::save_pmf(&model, &mut file)?;
        }
    }
    file.flush()?;
    eprintln!("model written to {}", path.display());
    Ok(())
}

enum Loaded {
    Resbemf(FactorModel),
    Pmf(PmfModel),
}

impl Loaded {
    fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let ctx = |e: resbemf::Error| CliError::from(e).context(path.display());
        match persist::peek_model_type(&text).map_err(ctx)?.as_str() {
            RESBEMF => Ok(Loaded::Resbemf(persist::model_from_str(&text).map_err(ctx)?)),
            PMF => Ok(Loaded::Pmf(persist::pmf_from_str(&text).map_err(ctx)?)),
            other => Err(CliError::Input(format!("{}: unknown model_type {other:?}", path.display()))),
        }
    }

    fn predictor(&self) -> &dyn Predictor {
        match self {
            Loaded::Resbemf(m) => m,
            Loaded::Pmf(m) => m,
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            Loaded::Resbemf(_) => RESBEMF,
            Loaded::Pmf(_) => PMF,
        }
    }
}

#[derive(Serialize)]
struct PairPrediction<'a> {
    user: &'a str,
    item: &'a str,
    /// Absent when the reliability is below theta.
    prediction: Option<f64>,
    reliability: f64,
    mode: f64,
    mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
    cold_start: bool,
}

fn predict_cmd(
    ctx: &Ctx,
    model: Option<PathBuf>,
    pair: Option<(String, String)>,
    pairs: Option<PathBuf>,
) -> Result<(), CliError> {
    let loaded = Loaded::read(&ctx.model_path(model)?)?;
    let theta = ctx.theta()?;
    let pairs = match (pair, pairs) {
        (Some(p), _) => vec![p],
        (None, Some(path)) => read_pairs(&path, &ctx.format()?)?,
        (None, None) => return Err(CliError::Input("give --user and --item, or --pairs".into())),
    };
    let predictor = loaded.predictor();
    let scores = predictor.score_set();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for (user, item) in &pairs {
        let p = predictor.predict_pair(user, item);
        let probs = match &loaded {
            Loaded::Resbemf(m) => Some(match m.resolve(user, item) {
                Ok((u, i)) => predict_distribution(m, u, i)?.probs,
                Err(_) => vec![1.0 / scores.len() as f64; scores.len()],
            }),
            Loaded::Pmf(_) => None,
        };
        let row = PairPrediction {
            user,
            item,
            prediction: (p.reliability >= theta).then_some(p.value),
            reliability: p.reliability,
            mode: p.mode,
            mean: p.mean,
            probs,
            cold_start: p.cold_start,
        };
        serde_json::to_writer(&mut out, &row).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, model: Option<PathBuf>) -> Result<(), CliError> {
    let loaded = Loaded::read(&ctx.model_path(model)?)?;
    let predictor = loaded.predictor();
    let scores = predictor.score_set().clone();
    let mut format = ctx.format()?;
    format.score_set = Some(scores.clone());
    let path = match ctx.test() {
        Some(p) => p,
        None => ctx.input()?,
    };
    let ds: RatingsDataset = read_ratings(&path, &format)?;
    let grid = ctx.grid()?;
    let ranking = ctx.ranking(&scores)?;
    let evaluation = Evaluation::new(predictor, &ds, ds.ratings());
    let report = evaluation.report(&grid, ranking);

    let dir = ctx.out_dir()?;
    let mut out = create(&dir.join("metrics.csv"))?;
    report.write_csv(&mut out)?;
    out.flush()?;
    let summary = json!({
        "model_type": loaded.type_name(),
        "n_test_ratings": report.n_test_ratings,
        "n_users": report.n_users,
        "n_cold_start": report.n_cold_start,
        "grid_n": grid.n_points(),
        "aggregate": report.aggregate,
        "ranking": report.ranking,
        "map_by_theta": report.rows.iter().map(|r| json!({"theta": r.theta, "map": r.map})).collect::<Vec<_>>(),
    });
    write_json(&dir.join("summary.json"), &summary)?;
    if report.n_cold_start > 0 {
        log::warn!("{} test pairs unknown to the model", report.n_cold_start);
    }
    eprintln!("metrics written to {}", dir.display());
    Ok(())
}

fn search_cmd(
    ctx: &Ctx,
    space: Option<PathBuf>,
    n_folds: Option<usize>,
    model_type: Option<ModelType>,
) -> Result<(), CliError> {
    let space = match (space, &ctx.cfg.search_space) {
        (Some(path), _) => load_space(&path)?,
        (None, Some(src)) => src.load()?,
        (None, None) => return Err(CliError::Input("--space is required".into())),
    };
    let kind = match ctx.model_type(model_type)? {
        ModelType::Resbemf => ModelKind::Resbemf,
        ModelType::Pmf => ModelKind::Pmf,
    };
    let config = SearchConfig {
        kind,
        n_folds: n_folds.or(ctx.cfg.n_folds).unwrap_or(DEFAULT_FOLDS),
        grid: ctx.grid()?,
        seed: ctx.seed(),
        threads: ctx.threads()?,
    };
    let ds = read_ratings(&ctx.input()?, &ctx.format()?)?;
    let dir = ctx.out_dir()?;
    let outcome = random_search(&space, &ds, &config)?;

    let mut out = create(&dir.join("candidates.csv"))?;
    outcome.write_candidates_csv(&mut out)?;
    out.flush()?;
    let mut out = create(&dir.join("front.csv"))?;
    outcome.write_front_csv(&mut out)?;
    out.flush()?;
    fs::write(dir.join("scatter.svg"), svg::scatter(&outcome))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.join("scatter.svg").display())))?;
    if outcome.n_failed() > 0 {
        log::warn!("{} of {} candidates failed", outcome.n_failed(), outcome.candidates.len());
    }
    eprintln!(
        "{} candidates evaluated, {} on the front, written to {}",
        outcome.candidates.len() - outcome.n_failed(),
        outcome.front.len(),
        dir.display()
    );
    Ok(())
}
