use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{BlockGeometry, SplitRatios};
use crate::detector::ThresholdGrid;
use crate::eval::Baseline;
use crate::miner::DEFAULT_MAX_FILE_BYTES;
use crate::trainer::Hyperparams;

/// Environment variable naming the config used when `--config` is absent.
pub const CONFIG_ENV: &str = "TODO_PATCHER_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("no config given: pass --config or set {CONFIG_ENV}")]
    NoConfig,
    #[error("cannot read config {path}: {reason}")]
    Unreadable { path: String, reason: String },
    #[error("invalid config {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub shuffle: bool,
    /// Epoch interval between saved checkpoints; the last epoch is always saved.
    pub checkpoint_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            margin: hp.margin,
            learning_rate: hp.learning_rate,
            epochs: hp.epochs,
            shuffle: hp.shuffle,
            checkpoint_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub dim: usize,
    /// Tokens seen fewer times in the training split map to `[UNK]`.
    pub min_freq: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { dim: 128, min_freq: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub names: Vec<Baseline>,
    pub rg_probability: f64,
    pub csm_tau: f64,
    /// Adds a row for the untrained encoder, i.e. plain embedding similarity.
    pub ablation: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            names: Baseline::ALL.to_vec(),
            rg_probability: 0.5,
            csm_tau: 0.5,
            ablation: false,
        }
    }
}

/// One JSON document describing a whole run. `seed` is mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub repos_root: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(default = "default_extensions")]
    pub extensions: Vec<String>,
    #[serde(default = "default_marker")]
    pub marker: String,
    #[serde(default)]
    pub geometry: BlockGeometry,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub threshold_grid: ThresholdGrid,
    /// Fixed detection threshold; when absent the tuned one is used.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_max_file_bytes")]
    pub max_file_bytes: u64,
}

fn default_extensions() -> Vec<String> {
    vec![".py".to_string()]
}

fn default_marker() -> String {
    crate::DEFAULT_MARKER.to_string()
}

fn default_max_file_bytes() -> u64 {
    DEFAULT_MAX_FILE_BYTES
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub marker: Option<String>,
    pub threshold: Option<f64>,
    pub geometry: Option<BlockGeometry>,
    pub workers: Option<usize>,
}

impl RunConfig {
    /// A config with defaults for everything but the two paths and the seed.
    pub fn new(repos_root: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            repos_root: repos_root.into(),
            output_dir: output_dir.into(),
            seed,
            extensions: default_extensions(),
            marker: default_marker(),
            geometry: BlockGeometry::default(),
            split: SplitRatios::default(),
            training: TrainingConfig::default(),
            encoder: EncoderConfig::default(),
            threshold_grid: ThresholdGrid::default(),
            threshold: None,
            baselines: BaselineConfig::default(),
            workers: None,
            max_file_bytes: DEFAULT_MAX_FILE_BYTES,
        }
    }

    /// Parses a config; relative paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path, origin: &str) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Malformed {
            path: origin.to_string(),
            reason: e.to_string(),
        })?;
        for p in [&mut cfg.repos_root, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::from_json(&text, base, &path.display().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(marker) = &o.marker {
            self.marker = marker.clone();
        }
        if o.threshold.is_some() {
            self.threshold = o.threshold;
        }
        if let Some(g) = o.geometry {
            self.geometry = g;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !self.repos_root.is_dir() {
            return bad(format!("repos_root {} is not a directory", self.repos_root.display()));
        }
        if self.marker.is_empty() {
            return bad("marker must not be empty".into());
        }
        if self.extensions.is_empty() || self.extensions.iter().any(|e| e.is_empty()) {
            return bad("extensions must be a non-empty list of suffixes".into());
        }
        if !self.split.is_valid() {
            return bad(format!("split ratios {:?} must be non-negative and sum to 1", self.split));
        }
        if BlockGeometry::new(self.geometry.centrepiece_offset, self.geometry.context_radius).is_err() {
            return bad(format!("geometry {}: centrepiece offset must be non-zero", self.geometry));
        }
        self.threshold_grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(t) = self.threshold {
            if !(-1.0..=1.0).contains(&t) {
                return bad(format!("threshold {t} outside [-1, 1]"));
            }
        }
        self.hyperparams()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.encoder.dim < 2 {
            return bad(format!("encoder dim {} must be at least 2", self.encoder.dim));
        }
        if !(0.0..=1.0).contains(&self.baselines.rg_probability) || !(0.0..=1.0).contains(&self.baselines.csm_tau) {
            return bad("baseline probabilities must lie in [0, 1]".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            margin: self.training.margin,
            learning_rate: self.training.learning_rate,
            epochs: self.training.epochs,
            seed: self.seed,
            shuffle: self.training.shuffle,
        }
    }

    /// Digest of everything that influences outputs; `workers` is excluded.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("workers");
        }
        crate::io::digest_bytes(v.to_string().as_bytes())
    }
}

/// `--config` if given, otherwise the environment variable.
pub fn resolve_config_path(cli: Option<&Path>) -> Result<PathBuf, ConfigError> {
    if let Some(p) = cli {
        return Ok(p.to_path_buf());
    }
    match std::env::var_os(CONFIG_ENV) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => Err(ConfigError::NoConfig),
    }
}
