//! Stage runner behind the command-line front end.
//!
//! Each stage reads the outputs of its prerequisites from the run directory
//! and writes its own files under a stage subdirectory:
//!
//! | stage           | outputs                                                   |
//! |-----------------|-----------------------------------------------------------|
//! | `mine`          | `mine/<repo>.jsonl`, `mine/summary.json`                  |
//! | `extract`       | `extract/todo_methods.jsonl`, `extract/methods.jsonl`, `extract/rules.json` |
//! | `build-dataset` | `dataset/{train,validation,test}.jsonl`, `dataset/split.json`, `dataset/stats.json` |
//! | `train`         | `model/model.json`, `model/checkpoints/`, `model/train_report.json` |
//! | `tune`          | `tune/threshold.json`                                     |
//! | `detect`        | `detect/detections.jsonl`                                 |
//! | `patch`         | `patch/patches.jsonl`                                     |
//! | `evaluate`      | `eval/detection.csv`, `eval/ranking.csv`, `eval/summary.json` |
//!
//! `manifest.json` records the config digest, seeds and the digest of every
//! input and output. A stage whose inputs, parameters and outputs are
//! unchanged is skipped; a prerequisite output edited after it was recorded
//! raises [`PipelineError::StaleInput`].

mod config;
mod geometry;
mod manifest;
mod report;
mod stages;

pub use config::{
    resolve_config_path, BaselineConfig, ConfigError, EncoderConfig, Overrides, RunConfig, TrainingConfig, CONFIG_ENV,
};
pub use geometry::{compare_geometries, GeometryComparison, GeometryRow};
pub use manifest::{RunLock, RunManifest, StageRecord, LOCK_FILE, MANIFEST_FILE, MANIFEST_VERSION};
pub use report::{load_report, render_report, write_report, Report, ReportRow, Table};
pub use stages::{EvalRow, EvalSummary, MineSummary, PatchRecord, ABLATION_ROW, DETECTION_CSV, MODEL_ROW, RANKING_CSV};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::json;

use manifest::digest_outputs;

/// Bumped when a stage's output format or semantics change.
pub const STAGE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no repositories under {0}")]
    NoRepositories(PathBuf),
    #[error("stage `{needed_by}` needs the outputs of `{stage}`; run `{stage}` first")]
    MissingStage { stage: Stage, needed_by: Stage },
    #[error("stale input {path} (from `{stage}`): recorded digest {expected}, found {found}")]
    StaleInput {
        stage: Stage,
        path: String,
        expected: String,
        found: String,
    },
    #[error("no evaluation results in {0}; run `evaluate` first")]
    MissingResults(PathBuf),
    #[error("run directory is locked by {0}; remove it if no other run is active")]
    Locked(PathBuf),
    #[error("every repository failed to mine: {0}")]
    AllRepositoriesFailed(String),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: impl fmt::Display) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    pub(crate) fn stage(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    /// `2` for usage and configuration errors, `1` for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::NoRepositories(_)
            | PipelineError::MissingStage { .. }
            | PipelineError::MissingResults(_)
            | PipelineError::UnknownStage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Mine,
    Extract,
    BuildDataset,
    Train,
    Tune,
    Detect,
    Patch,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Mine,
        Stage::Extract,
        Stage::BuildDataset,
        Stage::Train,
        Stage::Tune,
        Stage::Detect,
        Stage::Patch,
        Stage::Evaluate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Mine => "mine",
            Stage::Extract => "extract",
            Stage::BuildDataset => "build-dataset",
            Stage::Train => "train",
            Stage::Tune => "tune",
            Stage::Detect => "detect",
            Stage::Patch => "patch",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Subdirectory of the run directory owned by this stage.
    pub fn dir(&self) -> &'static str {
        match self {
            Stage::Mine => "mine",
            Stage::Extract => "extract",
            Stage::BuildDataset => "dataset",
            Stage::Train => "model",
            Stage::Tune => "tune",
            Stage::Detect => "detect",
            Stage::Patch => "patch",
            Stage::Evaluate => "eval",
        }
    }

    /// Stages whose outputs this one reads. Detection stages only need
    /// `tune` when no fixed threshold is configured.
    pub fn prerequisites(&self, cfg: &RunConfig) -> Vec<Stage> {
        let mut scoring = vec![Stage::Extract, Stage::BuildDataset, Stage::Train];
        if cfg.threshold.is_none() {
            scoring.push(Stage::Tune);
        }
        match self {
            Stage::Mine => vec![],
            Stage::Extract => vec![Stage::Mine],
            Stage::BuildDataset => vec![Stage::Extract],
            Stage::Train => vec![Stage::BuildDataset],
            Stage::Tune => vec![Stage::Extract, Stage::BuildDataset, Stage::Train],
            Stage::Detect | Stage::Patch | Stage::Evaluate => scoring,
        }
    }

    /// The config values a stage depends on, beyond its input files.
    fn params(&self, cfg: &RunConfig) -> serde_json::Value {
        match self {
            Stage::Mine => json!({
                "marker": cfg.marker,
                "extensions": cfg.extensions,
                "max_file_bytes": cfg.max_file_bytes,
            }),
            Stage::Extract => json!({ "marker": cfg.marker }),
            Stage::BuildDataset => json!({
                "geometry": cfg.geometry,
                "split": cfg.split,
                "seed": cfg.seed,
            }),
            Stage::Train => json!({
                "encoder": cfg.encoder,
                "training": cfg.training,
                "seed": cfg.seed,
            }),
            Stage::Tune => json!({ "geometry": cfg.geometry, "grid": cfg.threshold_grid }),
            Stage::Detect | Stage::Patch => json!({ "geometry": cfg.geometry, "threshold": cfg.threshold }),
            Stage::Evaluate => json!({
                "geometry": cfg.geometry,
                "threshold": cfg.threshold,
                "grid": cfg.threshold_grid,
                "baselines": cfg.baselines,
                "seed": cfg.seed,
            }),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

/// What a stage implementation hands back to the runner.
#[derive(Debug, Default)]
pub(crate) struct StageOutput {
    /// Files written, relative to the run directory.
    pub files: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    pub threshold: Option<f64>,
}

/// An open run directory: config, manifest and lock.
pub struct Pipeline {
    cfg: RunConfig,
    manifest: RunManifest,
    pool: Option<rayon::ThreadPool>,
    _lock: RunLock,
}

impl Pipeline {
    /// Validates the config, locks `output_dir` and loads its manifest.
    pub fn open(cfg: RunConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let lock = RunLock::acquire(&cfg.output_dir)?;
        let mut manifest = RunManifest::load(&cfg.output_dir)?.unwrap_or_default();
        manifest.version = MANIFEST_VERSION;
        manifest.config_digest = cfg.digest();
        manifest.seed = cfg.seed;
        let pool = match cfg.workers {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| PipelineError::Config(ConfigError::Invalid(format!("workers: {e}"))))?,
            ),
            None => None,
        };
        Ok(Self {
            cfg,
            manifest,
            pool,
            _lock: lock,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn run_dir(&self) -> &Path {
        &self.cfg.output_dir
    }

    /// Runs `stages` in order.
    pub fn run_stages(&mut self, stages: &[Stage]) -> Result<Vec<(Stage, StageStatus)>, PipelineError> {
        stages.iter().map(|s| self.run(*s).map(|st| (*s, st))).collect()
    }

    /// Runs every stage in order.
    pub fn run_all(&mut self) -> Result<Vec<(Stage, StageStatus)>, PipelineError> {
        self.run_stages(&Stage::ALL)
    }

    pub fn run(&mut self, stage: Stage) -> Result<StageStatus, PipelineError> {
        match self.pool.take() {
            Some(pool) => {
                let result = pool.install(|| self.run_inner(stage));
                self.pool = Some(pool);
                result
            }
            None => self.run_inner(stage),
        }
    }

    fn run_inner(&mut self, stage: Stage) -> Result<StageStatus, PipelineError> {
        let dir = self.cfg.output_dir.clone();
        let inputs = self.check_inputs(stage)?;
        let params_digest = crate::io::digest_bytes(stage.params(&self.cfg).to_string().as_bytes());
        if let Some(prev) = self.manifest.stages.get(stage.name()) {
            let unchanged = prev.version == STAGE_VERSION
                && prev.params_digest == params_digest
                && prev.inputs == inputs
                && prev
                    .outputs
                    .iter()
                    .all(|(p, d)| crate::io::digest_file(&dir.join(p)).map(|x| &x == d).unwrap_or(false));
            if unchanged {
                log::info!("{stage}: up to date");
                return Ok(StageStatus::UpToDate);
            }
        }
        let stage_dir = dir.join(stage.dir());
        if stage_dir.exists() {
            std::fs::remove_dir_all(&stage_dir).map_err(|e| PipelineError::io(&stage_dir, e))?;
        }
        log::info!("{stage}: running");
        let out = stages::run(stage, &self.cfg)?;
        let mut files = out.files;
        files.sort();
        let record = StageRecord {
            version: STAGE_VERSION,
            params_digest,
            seeds: out.seeds,
            inputs,
            outputs: digest_outputs(&dir, &files)?,
        };
        if stage == Stage::Tune {
            self.manifest.threshold = out.threshold;
        }
        self.manifest.stages.insert(stage.name().to_string(), record);
        self.manifest.save(&dir)?;
        Ok(StageStatus::Ran)
    }

    /// Verifies prerequisite outputs against the manifest and returns the
    /// input digests of `stage`.
    fn check_inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>, PipelineError> {
        let dir = &self.cfg.output_dir;
        let mut inputs = BTreeMap::new();
        if stage == Stage::Mine {
            for repo in stages::repositories(&self.cfg)? {
                let head = stages::head_of(&repo).unwrap_or_else(|| "unreadable".to_string());
                inputs.insert(format!("repo:{}", crate::miner::repo_id(&repo)), head);
            }
        }
        for pre in stage.prerequisites(&self.cfg) {
            let record = self.manifest.stages.get(pre.name()).ok_or(PipelineError::MissingStage {
                stage: pre,
                needed_by: stage,
            })?;
            for (path, expected) in &record.outputs {
                let full = dir.join(path);
                if !full.exists() {
                    return Err(PipelineError::MissingStage {
                        stage: pre,
                        needed_by: stage,
                    });
                }
                let found = crate::io::digest_file(&full).map_err(|e| PipelineError::io(&full, e))?;
                if &found != expected {
                    return Err(PipelineError::StaleInput {
                        stage: pre,
                        path: path.clone(),
                        expected: expected.clone(),
                        found,
                    });
                }
                inputs.insert(path.clone(), found);
            }
        }
        Ok(inputs)
    }
}

/// Opens the run directory of `cfg` and runs every stage.
pub fn run_pipeline(cfg: RunConfig) -> Result<RunManifest, PipelineError> {
    let mut p = Pipeline::open(cfg)?;
    p.run_all()?;
    Ok(p.manifest().clone())
}
