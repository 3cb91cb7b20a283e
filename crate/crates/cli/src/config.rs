//! JSON run configuration. Every field is optional; command-line flags win
//! over the file, and built-in defaults fill whatever is left.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use resbemf::SearchSpace;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub format: Option<String>,
    pub delimiter: Option<String>,
    pub header: Option<bool>,
    pub columns: Option<Vec<usize>>,
    pub scores: Option<Vec<f64>>,
    pub model_type: Option<String>,
    pub model: Option<PathBuf>,
    pub k: Option<usize>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub grid_n: Option<usize>,
    pub top_n: Option<usize>,
    pub tau: Option<f64>,
    pub theta: Option<f64>,
    pub test_fraction: Option<f64>,
    pub folds: Option<usize>,
    pub n_folds: Option<usize>,
    pub search_space: Option<SpaceSource>,
}

/// A search space given inline or as a path to its own JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpaceSource {
    Inline(SearchSpace),
    Path(PathBuf),
}

impl SpaceSource {
    pub fn load(&self) -> Result<SearchSpace, CliError> {
        match self {
            SpaceSource::Inline(space) => Ok(space.clone()),
            SpaceSource::Path(path) => load_space(path),
        }
    }
}

pub fn load_space(path: &Path) -> Result<SearchSpace, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.test, &mut cfg.model, &mut cfg.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(SpaceSource::Path(p)) = &mut cfg.search_space {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
