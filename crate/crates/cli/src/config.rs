use std::path::{Path, PathBuf};

use mgpert::OptionKind;
use serde::Deserialize;

use crate::CliError;

/// Flat key/value file; keys mirror the long flag names with `_` for `-`.
/// Every key is optional, unknown keys are an error.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threads: Option<usize>,

    pub kappa: Option<f64>,
    pub theta: Option<f64>,
    pub xi: Option<f64>,
    pub rho: Option<f64>,
    pub alpha: Option<f64>,
    pub rate: Option<f64>,
    pub sigma: Option<f64>,
    pub v0: Option<f64>,

    pub spot: Option<f64>,
    pub strike: Option<f64>,
    pub days: Option<f64>,
    pub variance: Option<f64>,
    pub kind: Option<OptionKind>,

    pub paths: Option<usize>,
    pub steps_per_day: Option<usize>,
    pub antithetic: Option<bool>,
    pub stratified: Option<bool>,
    pub n_strata: Option<usize>,
    pub seed: Option<u64>,

    pub nodes: Option<usize>,
    pub time_nodes: Option<usize>,
    pub half_width: Option<f64>,
    pub fd_step: Option<f64>,
    pub rel_tol: Option<f64>,
    pub grid: Option<usize>,
    pub draws: Option<usize>,

    pub out: Option<PathBuf>,
    pub v_grid: Option<Vec<f64>>,
    pub maturity_days: Option<u32>,
    pub dataset: Option<Vec<u8>>,
    pub full: Option<bool>,
    pub sample_paths: Option<usize>,
    pub obs: Option<usize>,
    pub sims: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            msg: e.message().to_string(),
        })
    }
}

/// Flag, then config file, then default.
pub fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

/// Resolved settings in a fixed order; hashed into every output file.
#[derive(Debug, Default, Clone)]
pub struct Record {
    entries: Vec<(&'static str, String)>,
}

impl Record {
    pub fn new(command: &str) -> Self {
        Self { entries: vec![("command", command.to_string())] }
    }

    pub fn put(&mut self, key: &'static str, value: impl std::fmt::Debug) {
        self.entries.push((key, format!("{value:?}")));
    }

    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn sha256(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
