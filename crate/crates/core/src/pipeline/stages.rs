use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PipelineError, RunConfig, Stage, StageOutput};
use crate::dataset::{
    build_triplets, group_by_todo, load_dataset, serialize_dataset, split_by_project, DatasetSplit, NegativeSampler,
    TripletSample, TripletStats,
};
use crate::detector::{anchor_id, pool_scores, tune_on_pools, tune_threshold, DetectionRecord, RankedCentre, ThresholdReport, REPORTED_RANKS};
use crate::encoder::{init_model, EncoderError, EncoderModel, Vocabulary};
use crate::eval::{
    build_candidate_pool, evaluate_encoder, run_baseline, Baseline, BaselineParams, CandidatePool, DetectionMetrics,
    MethodCorpus, RankingMetrics, TfIdfEncoder, RANK_CUTOFFS,
};
use crate::extract::{extract_file, MethodRecord, ParseOptions, RuleCounts, TodoMethod, TodoMethodRecord};
use crate::io::{derive_rng, read_jsonl, write_jsonl};
use crate::miner::{discover_repositories, mine_repository, repo_id, MineStats, MinerOptions, SnapshotReader, TodoCommitRecord, TodoLine};
use crate::trainer::train_with_checkpoints;

pub(crate) fn run(stage: Stage, cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    match stage {
        Stage::Mine => mine(cfg),
        Stage::Extract => extract(cfg),
        Stage::BuildDataset => build_dataset(cfg),
        Stage::Train => train(cfg),
        Stage::Tune => tune(cfg),
        Stage::Detect => detect(cfg),
        Stage::Patch => patch(cfg),
        Stage::Evaluate => evaluate(cfg),
    }
}

pub(crate) fn repositories(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let repos = discover_repositories(&cfg.repos_root).map_err(|e| PipelineError::io(&cfg.repos_root, e))?;
    if repos.is_empty() {
        return Err(PipelineError::NoRepositories(cfg.repos_root.clone()));
    }
    Ok(repos)
}

pub(crate) fn head_of(repo: &Path) -> Option<String> {
    let r = git2::Repository::open(repo).ok()?;
    let head = r.head().ok()?.target()?;
    Some(head.to_string())
}

fn write_json<T: Serialize>(out: &Path, rel: &str, value: &T) -> Result<PathBuf, PipelineError> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    let json = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
    std::fs::write(&path, json).map_err(|e| PipelineError::io(&path, e))?;
    Ok(PathBuf::from(rel))
}

fn read_json<T: for<'de> Deserialize<'de>>(out: &Path, rel: &str) -> Result<T, PipelineError> {
    let path = out.join(rel);
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Corrupt(format!("{}: {e}", path.display())))
}

fn write_records<T: Serialize>(out: &Path, rel: &str, records: &[T]) -> Result<PathBuf, PipelineError> {
    write_jsonl(&out.join(rel), records).map_err(|e| PipelineError::Corrupt(e.to_string()))?;
    Ok(PathBuf::from(rel))
}

fn read_records<T: for<'de> Deserialize<'de>>(out: &Path, rel: &str) -> Result<Vec<T>, PipelineError> {
    read_jsonl(&out.join(rel)).map_err(|e| PipelineError::Corrupt(e.to_string()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MineSummary {
    pub repositories: BTreeMap<String, MineStats>,
    pub failed: BTreeMap<String, String>,
    pub total: MineStats,
}

fn mine(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let repos = repositories(cfg)?;
    let extensions = cfg.extensions.iter().cloned().collect();
    let opts = MinerOptions {
        max_file_bytes: cfg.max_file_bytes,
    };
    let results: Vec<_> = repos
        .par_iter()
        .map(|r| (repo_id(r), mine_repository(r, &cfg.marker, &extensions, &opts)))
        .collect();
    let out = &cfg.output_dir;
    let mut summary = MineSummary::default();
    let mut files = Vec::new();
    for (id, result) in results {
        match result {
            Ok((commits, stats)) => {
                let records: Vec<TodoCommitRecord> = commits.iter().map(|c| c.to_record()).collect();
                files.push(write_records(out, &format!("mine/{id}.jsonl"), &records)?);
                summary.total.commits_scanned += stats.commits_scanned;
                summary.total.todo_commits += stats.todo_commits;
                summary.total.source_todo_commits += stats.source_todo_commits;
                summary.total.todos += stats.todos;
                summary.repositories.insert(id, stats);
            }
            Err(e) => {
                log::error!("mining {id} failed: {e}");
                summary.failed.insert(id, e.to_string());
            }
        }
    }
    if summary.repositories.is_empty() {
        let names: Vec<&str> = summary.failed.keys().map(String::as_str).collect();
        return Err(PipelineError::AllRepositoriesFailed(names.join(", ")));
    }
    files.push(write_json(out, "mine/summary.json", &summary)?);
    Ok(StageOutput {
        files,
        ..Default::default()
    })
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RulesSummary {
    repositories: BTreeMap<String, RuleCounts>,
    total: RuleCounts,
    kept: usize,
    methods: usize,
    missing_files: usize,
}

struct RepoExtraction {
    kept: Vec<TodoMethod>,
    methods: Vec<MethodRecord>,
    counts: RuleCounts,
    missing_files: usize,
}

fn extract_repo(cfg: &RunConfig, id: &str, records: &[TodoCommitRecord]) -> Result<RepoExtraction, PipelineError> {
    let repo_path = cfg.repos_root.join(id);
    let reader = SnapshotReader::open(&repo_path).map_err(|e| PipelineError::stage(Stage::Extract, e))?;
    let opts = ParseOptions {
        strip_comments: true,
        marker: cfg.marker.clone(),
    };
    let mut out = RepoExtraction {
        kept: Vec::new(),
        methods: Vec::new(),
        counts: RuleCounts::default(),
        missing_files: 0,
    };
    for rec in records {
        let mut by_path: BTreeMap<&str, Vec<TodoLine>> = BTreeMap::new();
        for t in &rec.todos {
            by_path.entry(t.path.as_str()).or_default().push(t.clone());
        }
        for (path, lines) in by_path {
            let raw = match reader.file_at(&rec.hash, path) {
                Ok(Some(raw)) => raw,
                Ok(None) => {
                    out.missing_files += 1;
                    continue;
                }
                Err(e) => {
                    log::warn!("{id}@{}: cannot read {path}: {e}", rec.hash);
                    out.missing_files += 1;
                    continue;
                }
            };
            let fx = extract_file(id, path, &rec.hash, &raw, &lines, &opts);
            out.kept.extend(fx.kept);
            out.methods.extend(fx.methods);
            out.counts.merge(&fx.counts);
        }
    }
    Ok(out)
}

fn extract(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let out = &cfg.output_dir;
    let summary: MineSummary = read_json(out, "mine/summary.json")?;
    let mut inputs = Vec::new();
    for id in summary.repositories.keys() {
        let records: Vec<TodoCommitRecord> = read_records(out, &format!("mine/{id}.jsonl"))?;
        inputs.push((id.clone(), records));
    }
    let results: Vec<Result<RepoExtraction, PipelineError>> =
        inputs.par_iter().map(|(id, recs)| extract_repo(cfg, id, recs)).collect();
    let mut todo_methods: Vec<TodoMethodRecord> = Vec::new();
    let mut methods = Vec::new();
    let mut rules = RulesSummary::default();
    for ((id, _), result) in inputs.iter().zip(results) {
        let r = result?;
        todo_methods.extend(r.kept.iter().map(TodoMethodRecord::from));
        methods.extend(r.methods);
        rules.total.merge(&r.counts);
        rules.missing_files += r.missing_files;
        rules.repositories.insert(id.clone(), r.counts);
    }
    rules.kept = todo_methods.len();
    rules.methods = methods.len();
    Ok(StageOutput {
        files: vec![
            write_records(out, "extract/todo_methods.jsonl", &todo_methods)?,
            write_records(out, "extract/methods.jsonl", &methods)?,
            write_json(out, "extract/rules.json", &rules)?,
        ],
        ..Default::default()
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetStats {
    triplets: TripletStats,
    train: usize,
    validation: usize,
    test: usize,
    projects: usize,
}

fn build_dataset(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let out = &cfg.output_dir;
    let todo_methods: Vec<TodoMethodRecord> = read_records(out, "extract/todo_methods.jsonl")?;
    let methods: Vec<MethodRecord> = read_records(out, "extract/methods.jsonl")?;
    let groups = group_by_todo(todo_methods.into_iter().map(TodoMethod::from).collect());
    let sampler = NegativeSampler::new(&methods, cfg.geometry);
    let (triplets, stats) = build_triplets(&groups, &sampler, &cfg.geometry, cfg.seed);
    log::info!(
        "{} groups, {} triplets, {} dropped",
        stats.groups,
        stats.emitted,
        stats.dropped
    );
    let split = split_by_project(triplets, cfg.split, cfg.seed).map_err(|e| PipelineError::stage(Stage::BuildDataset, e))?;
    serialize_dataset(&split, &out.join("dataset")).map_err(|e| PipelineError::stage(Stage::BuildDataset, e))?;
    let ds = DatasetStats {
        triplets: stats,
        train: split.train.len(),
        validation: split.validation.len(),
        test: split.test.len(),
        projects: split.project_assignment.len(),
    };
    let mut files: Vec<PathBuf> = ["train.jsonl", "validation.jsonl", "test.jsonl", "split.json"]
        .iter()
        .map(|f| PathBuf::from("dataset").join(f))
        .collect();
    files.push(write_json(out, "dataset/stats.json", &ds)?);
    Ok(StageOutput {
        files,
        seeds: [("split".to_string(), cfg.seed), ("triplets".to_string(), cfg.seed)].into(),
        ..Default::default()
    })
}

fn dataset(cfg: &RunConfig) -> Result<DatasetSplit, PipelineError> {
    load_dataset(&cfg.output_dir.join("dataset")).map_err(|e| PipelineError::Corrupt(e.to_string()))
}

const MODEL_FILE: &str = "model/model.json";

fn train(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let out = &cfg.output_dir;
    let split = dataset(cfg)?;
    let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Train, e);
    let vocab = Vocabulary::build(&split.train, cfg.encoder.min_freq).map_err(|e| err(&e))?;
    let model = init_model(vocab, cfg.encoder.dim, cfg.seed).map_err(|e| err(&e))?;
    let ckpt_dir = out.join("model/checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| PipelineError::io(&ckpt_dir, e))?;
    let (model, mut report) = train_with_checkpoints(
        model,
        &split.train,
        &cfg.hyperparams(),
        Some(&ckpt_dir),
        cfg.training.checkpoint_every,
    )
    .map_err(|e| err(&e))?;
    model.save(&out.join(MODEL_FILE)).map_err(|e| err(&e))?;
    report.final_model_path = Some(MODEL_FILE.to_string());
    let mut files = vec![PathBuf::from(MODEL_FILE)];
    let mut ckpts: Vec<PathBuf> = std::fs::read_dir(&ckpt_dir)
        .map_err(|e| PipelineError::io(&ckpt_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| PathBuf::from("model/checkpoints").join(e.file_name()))
        .collect();
    ckpts.sort();
    files.extend(ckpts);
    files.push(write_json(out, "model/train_report.json", &report)?);
    Ok(StageOutput {
        files,
        seeds: [("init".to_string(), cfg.seed), ("shuffle".to_string(), cfg.seed)].into(),
        ..Default::default()
    })
}

fn model(cfg: &RunConfig) -> Result<EncoderModel, PipelineError> {
    EncoderModel::load(&cfg.output_dir.join(MODEL_FILE)).map_err(|e| PipelineError::Corrupt(e.to_string()))
}

fn corpus(cfg: &RunConfig) -> Result<MethodCorpus, PipelineError> {
    let methods: Vec<MethodRecord> = read_records(&cfg.output_dir, "extract/methods.jsonl")?;
    Ok(MethodCorpus::new(methods))
}

/// One pool per triplet; triplets whose pool cannot be built are logged and skipped.
fn pools(samples: &[TripletSample], corpus: &MethodCorpus) -> Vec<CandidatePool> {
    samples
        .iter()
        .filter_map(|t| match build_candidate_pool(t, corpus) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("no pool for group {}: {e}", t.group_id);
                None
            }
        })
        .collect()
}

const THRESHOLD_FILE: &str = "tune/threshold.json";

fn tune(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let split = dataset(cfg)?;
    let corpus = corpus(cfg)?;
    let model = model(cfg)?;
    let report = tune_threshold(
        &model,
        &split.validation,
        |t| build_candidate_pool(t, &corpus),
        &cfg.geometry,
        &cfg.threshold_grid,
    )
    .map_err(|e| PipelineError::stage(Stage::Tune, e))?;
    log::info!("tuned threshold {:.2} over {} pools", report.chosen, report.pools);
    Ok(StageOutput {
        files: vec![write_json(&cfg.output_dir, THRESHOLD_FILE, &report)?],
        threshold: Some(report.chosen),
        ..Default::default()
    })
}

fn threshold(cfg: &RunConfig) -> Result<f64, PipelineError> {
    match cfg.threshold {
        Some(t) => Ok(t),
        None => Ok(read_json::<ThresholdReport>(&cfg.output_dir, THRESHOLD_FILE)?.chosen),
    }
}

struct Scoring {
    model: EncoderModel,
    theta: f64,
    pools: Vec<CandidatePool>,
}

fn scoring(cfg: &RunConfig) -> Result<Scoring, PipelineError> {
    let split = dataset(cfg)?;
    let corpus = corpus(cfg)?;
    Ok(Scoring {
        model: model(cfg)?,
        theta: threshold(cfg)?,
        pools: pools(&split.test, &corpus),
    })
}

/// Scores every test pool, skipping degenerate anchors.
fn scored_pools<'a>(
    s: &'a Scoring,
    cfg: &RunConfig,
) -> Result<Vec<(&'a CandidatePool, Vec<crate::detector::MethodScore>)>, PipelineError> {
    let mut out = Vec::with_capacity(s.pools.len());
    for pool in &s.pools {
        match pool_scores(&s.model, pool, &cfg.geometry) {
            Ok((_, methods)) => out.push((pool, methods)),
            Err(EncoderError::DegenerateEmbedding) => {
                log::warn!("anchor {} is degenerate; pool skipped", anchor_id(&pool.anchor));
            }
            Err(e) => return Err(PipelineError::Corrupt(e.to_string())),
        }
    }
    Ok(out)
}

fn detect(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let s = scoring(cfg)?;
    let records: Vec<DetectionRecord> = scored_pools(&s, cfg)?
        .iter()
        .flat_map(|(pool, methods)| methods.iter().map(|m| DetectionRecord::new(&pool.anchor, m, s.theta)))
        .collect();
    Ok(StageOutput {
        files: vec![write_records(&cfg.output_dir, "detect/detections.jsonl", &records)?],
        ..Default::default()
    })
}

/// A flagged method with the line where the anchor's TODO comment should go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub anchor_id: String,
    pub method_id: String,
    pub file: String,
    pub todo_text: String,
    pub score: f64,
    pub recommended_line: u32,
    pub ranked: Vec<RankedCentre>,
}

fn patch(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let s = scoring(cfg)?;
    let mut records = Vec::new();
    for (pool, methods) in scored_pools(&s, cfg)? {
        for (m, score) in pool.methods.iter().zip(&methods) {
            let Some(best) = score.best_block() else { continue };
            if score.best_score < s.theta {
                continue;
            }
            records.push(PatchRecord {
                anchor_id: anchor_id(&pool.anchor),
                method_id: score.method_id.clone(),
                file: m.file.clone(),
                todo_text: pool.anchor.todo_text.clone(),
                score: score.best_score,
                recommended_line: best.centre_line,
                ranked: score
                    .ranked
                    .iter()
                    .take(REPORTED_RANKS)
                    .map(|b| RankedCentre {
                        centre_line: b.block.centre_line,
                        score: b.score,
                    })
                    .collect(),
            });
        }
    }
    Ok(StageOutput {
        files: vec![write_records(&cfg.output_dir, "patch/patches.jsonl", &records)?],
        ..Default::default()
    })
}

/// One approach in the results tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub approach: String,
    pub threshold: Option<f64>,
    pub detection: DetectionMetrics,
    pub macro_detection: DetectionMetrics,
    pub ranking: Option<RankingMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub threshold: f64,
    pub pools: usize,
    pub skipped: usize,
    pub rows: Vec<EvalRow>,
}

pub const MODEL_ROW: &str = "model";
pub const ABLATION_ROW: &str = "PLAIN";

fn evaluate(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Evaluate, e);
    let s = scoring(cfg)?;
    let split = dataset(cfg)?;
    let validation = pools(&split.validation, &corpus(cfg)?);
    let geom = &cfg.geometry;
    let mut rows = Vec::new();

    let main = evaluate_encoder(&s.model, &s.pools, geom, s.theta).map_err(|e| err(&e))?;
    rows.push(EvalRow {
        approach: MODEL_ROW.to_string(),
        threshold: Some(s.theta),
        detection: main.detection,
        macro_detection: main.macro_detection,
        ranking: Some(main.ranking),
    });

    if cfg.baselines.ablation {
        let plain = init_model(s.model.vocab().clone(), s.model.dim(), cfg.seed).map_err(|e| err(&e))?;
        let theta = tune_on_pools(&plain, &validation, geom, &cfg.threshold_grid)
            .map_err(|e| err(&e))?
            .chosen;
        let e = evaluate_encoder(&plain, &s.pools, geom, theta).map_err(|e| err(&e))?;
        rows.push(EvalRow {
            approach: ABLATION_ROW.to_string(),
            threshold: Some(theta),
            detection: e.detection,
            macro_detection: e.macro_detection,
            ranking: Some(e.ranking),
        });
    }

    let mut params = BaselineParams {
        rg_probability: cfg.baselines.rg_probability,
        csm_tau: cfg.baselines.csm_tau,
        geometry: *geom,
        ..Default::default()
    };
    for b in &cfg.baselines.names {
        let mut rng = derive_rng(cfg.seed, b.name());
        let (tfidf, threshold) = if *b == Baseline::Tfidf {
            let enc = TfIdfEncoder::fit(&split.train).map_err(|e| err(&e))?;
            params.tfidf_threshold = tune_on_pools(&enc, &validation, geom, &cfg.threshold_grid)
                .map_err(|e| err(&e))?
                .chosen;
            (Some(enc), Some(params.tfidf_threshold))
        } else {
            (None, None)
        };
        let r = run_baseline(*b, &s.pools, &params, tfidf.as_ref(), &mut rng).map_err(|e| err(&e))?;
        rows.push(EvalRow {
            approach: r.name,
            threshold,
            detection: r.detection,
            macro_detection: r.macro_detection,
            ranking: r.ranking,
        });
    }

    let out = &cfg.output_dir;
    let summary = EvalSummary {
        threshold: s.theta,
        pools: s.pools.len(),
        skipped: main.skipped,
        rows,
    };
    Ok(StageOutput {
        files: vec![
            write_detection_csv(out, &summary.rows)?,
            write_ranking_csv(out, &summary.rows)?,
            write_json(out, "eval/summary.json", &summary)?,
        ],
        seeds: [("RG".to_string(), cfg.seed)].into(),
        ..Default::default()
    })
}

pub const DETECTION_CSV: &str = "eval/detection.csv";
pub const RANKING_CSV: &str = "eval/ranking.csv";

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> PipelineError + '_ {
    move |e| PipelineError::io(path, e)
}

fn write_detection_csv(out: &Path, rows: &[EvalRow]) -> Result<PathBuf, PipelineError> {
    let path = out.join(DETECTION_CSV);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record([
        "approach",
        "threshold",
        "precision",
        "recall",
        "f1",
        "tp",
        "fp",
        "fn",
        "macro_precision",
        "macro_recall",
        "macro_f1",
    ])
    .map_err(csv_err(&path))?;
    for r in rows {
        let d = &r.detection;
        let m = &r.macro_detection;
        w.write_record([
            r.approach.clone(),
            r.threshold.map(|t| t.to_string()).unwrap_or_default(),
            d.precision.to_string(),
            d.recall.to_string(),
            d.f1.to_string(),
            d.tp.to_string(),
            d.fp.to_string(),
            d.fn_.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| PipelineError::io(&path, e))?;
    Ok(PathBuf::from(DETECTION_CSV))
}

fn write_ranking_csv(out: &Path, rows: &[EvalRow]) -> Result<PathBuf, PipelineError> {
    let path = out.join(RANKING_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header = vec!["approach".to_string()];
    header.extend(RANK_CUTOFFS.iter().map(|k| format!("p@{k}")));
    header.extend(RANK_CUTOFFS.iter().map(|k| format!("dcg@{k}")));
    w.write_record(&header).map_err(csv_err(&path))?;
    for r in rows {
        let Some(rank) = &r.ranking else { continue };
        let mut rec = vec![r.approach.clone()];
        rec.extend(RANK_CUTOFFS.iter().map(|k| rank.p_at_k[k].to_string()));
        rec.extend(RANK_CUTOFFS.iter().map(|k| rank.dcg_at_k[k].to_string()));
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| PipelineError::io(&path, e))?;
    Ok(PathBuf::from(RANKING_CSV))
}
