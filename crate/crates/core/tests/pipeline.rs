use std::path::{Path, PathBuf};
use std::process::Command;

use todo_patcher::eval::Baseline;
use todo_patcher::fixture::write_corpus_repos;
use todo_patcher::pipeline::{
    load_report, render_report, run_pipeline, Pipeline, PipelineError, RunConfig, RunLock, Stage, StageStatus,
    CONFIG_ENV, MANIFEST_FILE,
};
use todo_patcher::synth::CorpusConfig;

fn corpus(root: &Path, projects: usize, seed: u64) -> PathBuf {
    let repos = root.join("repos");
    std::fs::create_dir_all(&repos).unwrap();
    let cfg = CorpusConfig {
        projects,
        ..Default::default()
    };
    write_corpus_repos(&repos, &cfg, seed).unwrap();
    repos
}

fn config(root: &Path, repos: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(repos, root.join("run"), seed);
    cfg.training.epochs = 5;
    cfg
}

fn write_config(root: &Path, cfg: &RunConfig) -> PathBuf {
    let path = root.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_todo-patcher"));
    c.env_remove(CONFIG_ENV).env("RUST_LOG", "error");
    c
}

#[test]
fn full_run_then_rerun_is_up_to_date() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 8, 3);
    let cfg = config(dir.path(), &repos, 3);
    let manifest = run_pipeline(cfg.clone()).unwrap();
    assert_eq!(manifest.stages.len(), Stage::ALL.len());
    assert!(manifest.threshold.is_some());
    for rel in ["eval/detection.csv", "eval/ranking.csv", "detect/detections.jsonl", "patch/patches.jsonl"] {
        assert!(cfg.output_dir.join(rel).exists(), "{rel}");
    }
    let before = std::fs::read(cfg.output_dir.join(MANIFEST_FILE)).unwrap();
    let mut p = Pipeline::open(cfg.clone()).unwrap();
    let statuses = p.run_all().unwrap();
    assert!(statuses.iter().all(|(_, s)| *s == StageStatus::UpToDate), "{statuses:?}");
    drop(p);
    assert_eq!(std::fs::read(cfg.output_dir.join(MANIFEST_FILE)).unwrap(), before);
}

#[test]
fn changed_parameter_reruns_only_downstream_stages() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 6, 5);
    let mut cfg = config(dir.path(), &repos, 5);
    run_pipeline(cfg.clone()).unwrap();
    cfg.threshold = Some(0.8);
    let mut p = Pipeline::open(cfg).unwrap();
    let statuses = p.run_all().unwrap();
    let ran: Vec<Stage> = statuses
        .iter()
        .filter(|(_, s)| *s == StageStatus::Ran)
        .map(|(st, _)| *st)
        .collect();
    assert_eq!(ran, [Stage::Detect, Stage::Patch, Stage::Evaluate]);
}

#[test]
fn stage_without_prerequisite_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 4, 1);
    let cfg = config(dir.path(), &repos, 1);
    let mut p = Pipeline::open(cfg).unwrap();
    let err = p.run(Stage::Train).unwrap_err();
    assert!(
        matches!(err, PipelineError::MissingStage { stage: Stage::BuildDataset, needed_by: Stage::Train }),
        "{err}"
    );
    assert!(err.to_string().contains("build-dataset"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn edited_prerequisite_output_is_stale() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 4, 2);
    let cfg = config(dir.path(), &repos, 2);
    let mut p = Pipeline::open(cfg.clone()).unwrap();
    p.run_stages(&[Stage::Mine, Stage::Extract, Stage::BuildDataset]).unwrap();
    let train = cfg.output_dir.join("dataset/train.jsonl");
    let mut text = std::fs::read_to_string(&train).unwrap();
    text.push('\n');
    std::fs::write(&train, text).unwrap();
    match p.run(Stage::Train) {
        Err(PipelineError::StaleInput { stage, path, .. }) => {
            assert_eq!(stage, Stage::BuildDataset);
            assert_eq!(path, "dataset/train.jsonl");
        }
        other => panic!("expected StaleInput, got {other:?}"),
    }
}

#[test]
fn run_directory_is_locked_while_open() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 3, 4);
    let cfg = config(dir.path(), &repos, 4);
    let first = Pipeline::open(cfg.clone()).unwrap();
    assert!(matches!(Pipeline::open(cfg.clone()), Err(PipelineError::Locked(_))));
    assert!(matches!(RunLock::acquire(&cfg.output_dir), Err(PipelineError::Locked(_))));
    drop(first);
    Pipeline::open(cfg).unwrap();
}

#[test]
fn mine_writes_one_file_per_repository_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 2, 8);
    let cfg = config(dir.path(), &repos, 8);
    let mut p = Pipeline::open(cfg.clone()).unwrap();
    p.run(Stage::Mine).unwrap();
    drop(p);
    let mut files: Vec<String> = std::fs::read_dir(cfg.output_dir.join("mine"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(files.len(), 3, "{files:?}");
    assert!(files.contains(&"summary.json".to_string()));
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(cfg.output_dir.join("mine").join(f)).unwrap()).collect();

    let mut again = cfg.clone();
    again.output_dir = dir.path().join("run2");
    let mut p = Pipeline::open(again.clone()).unwrap();
    p.run(Stage::Mine).unwrap();
    let second: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(again.output_dir.join("mine").join(f)).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn mine_tolerates_some_failing_repositories() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 1, 9);
    git2::Repository::init(repos.join("zz-empty")).unwrap();
    let cfg = config(dir.path(), &repos, 9);
    let mut p = Pipeline::open(cfg.clone()).unwrap();
    p.run(Stage::Mine).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cfg.output_dir.join("mine/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failed"].as_object().unwrap().len(), 1);
    assert_eq!(summary["repositories"].as_object().unwrap().len(), 1);
}

#[test]
fn cli_partial_mine_exits_one_with_results() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 1, 9);
    git2::Repository::init(repos.join("zz-empty")).unwrap();
    let cfg = config(dir.path(), &repos, 9);
    let path = write_config(dir.path(), &cfg);
    let out = bin().arg("--config").arg(&path).arg("mine").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("zz-empty"));
    assert!(cfg.output_dir.join("mine/summary.json").exists());
}

#[test]
fn mine_fails_when_every_repository_fails() {
    let dir = tempfile::tempdir().unwrap();
    let repos = dir.path().join("repos");
    git2::Repository::init(repos.join("a")).unwrap();
    let cfg = config(dir.path(), &repos, 1);
    let mut p = Pipeline::open(cfg).unwrap();
    let err = p.run(Stage::Mine).unwrap_err();
    assert!(matches!(err, PipelineError::AllRepositoriesFailed(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn report_has_one_row_per_approach_and_notes_missing_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 6, 6);
    let mut cfg = config(dir.path(), &repos, 6);
    cfg.baselines.names = vec![Baseline::Rg, Baseline::Cem, Baseline::Csm];
    run_pipeline(cfg.clone()).unwrap();
    let report = load_report(&cfg.output_dir).unwrap();
    let names: Vec<&str> = report.detection.rows.iter().map(|r| r.approach.as_str()).collect();
    assert_eq!(names, ["model", "RG", "CEM", "CSM"]);
    assert_eq!(report.ranking.as_ref().unwrap().rows.len(), 1);

    std::fs::remove_file(cfg.output_dir.join("eval/ranking.csv")).unwrap();
    let report = load_report(&cfg.output_dir).unwrap();
    assert!(report.ranking.is_none());
    assert!(render_report(&report).contains("table omitted"));
}

#[test]
fn cli_without_config_is_a_usage_error() {
    let out = bin().arg("mine").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(CONFIG_ENV));
}

#[test]
fn cli_on_empty_root_reports_no_repositories() {
    let dir = tempfile::tempdir().unwrap();
    let repos = dir.path().join("repos");
    std::fs::create_dir_all(&repos).unwrap();
    let path = write_config(dir.path(), &config(dir.path(), &repos, 1));
    let out = bin().arg("mine").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no repositories"));
}

#[test]
fn cli_rejects_malformed_flags_and_configs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["mine", "--geometry", "cen=0,con=2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"repos_root": ".", "output_dir": "out"}"#).unwrap();
    let out = bin().arg("mine").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn cli_runs_stages_from_the_environment_config() {
    let dir = tempfile::tempdir().unwrap();
    let repos = corpus(dir.path(), 6, 12);
    let path = write_config(dir.path(), &config(dir.path(), &repos, 12));
    let run = |args: &[&str]| bin().env(CONFIG_ENV, &path).args(args).output().unwrap();

    let out = run(&["train"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("build-dataset"));

    let out = run(&["report"]);
    assert_eq!(out.status.code(), Some(2));

    for stage in ["mine", "extract", "build-dataset", "train", "tune", "detect", "patch", "evaluate"] {
        let out = run(&[stage, "--workers", "2"]);
        assert_eq!(out.status.code(), Some(0), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = run(&["report"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Detection") && stdout.contains("P@1"), "{stdout}");

    let out = run(&["pipeline"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("evaluate: up to date"));

    let out = run(&["detect", "--threshold", "0.75", "--seed", "12"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("detect: done"));
}
