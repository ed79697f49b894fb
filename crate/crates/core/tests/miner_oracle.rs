mod common;

use std::collections::BTreeSet;

use common::{git_added_lines, git_non_merge_count, mined_todo_lines, oracle_todo_lines};
use todo_patcher::fixture::{annotated_repo, write_project_repo, RepoBuilder};
use todo_patcher::miner::{identify_todo_commits, mine_repository, walk_commits, MineError, MinerOptions};
use todo_patcher::synth::{generate_corpus, CorpusConfig};

const PLANTED: [usize; 4] = [1, 3, 6, 8];

fn py() -> BTreeSet<String> {
    [".py".to_string()].into()
}

#[test]
fn linear_history_is_walked_parents_first() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = RepoBuilder::init(&dir.path().join("r")).unwrap();
    let hashes: Vec<String> = (0..3)
        .map(|i| b.commit(&format!("c{i}"), &[("a.py", Some(&"x = 1\n".repeat(i + 1)))]).unwrap().to_string())
        .collect();
    let walked = walk_commits(b.path(), &MinerOptions::default()).unwrap();
    let got: Vec<String> = walked.iter().map(|c| c.commit_hash.clone()).collect();
    assert_eq!(got, hashes);
    assert!(walked[0].parent_hash.is_none());
    assert_eq!(walked[2].parent_hash.as_deref(), Some(hashes[1].as_str()));
}

#[test]
fn empty_repository_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    git2::Repository::init(dir.path()).unwrap();
    assert!(matches!(
        walk_commits(dir.path(), &MinerOptions::default()),
        Err(MineError::NotARepository { .. })
    ));
    let plain = tempfile::tempdir().unwrap();
    assert!(walk_commits(plain.path(), &MinerOptions::default()).is_err());
}

#[test]
fn merge_commits_are_skipped_like_git_log_no_merges() {
    let dir = tempfile::tempdir().unwrap();
    let repo = annotated_repo(dir.path()).unwrap();
    let walked = walk_commits(&repo.path, &MinerOptions::default()).unwrap();
    assert_eq!(walked.len(), git_non_merge_count(&repo.path));
}

#[test]
fn added_lines_match_git_log_line_for_line() {
    let dir = tempfile::tempdir().unwrap();
    let repo = annotated_repo(dir.path()).unwrap();
    let oracle: BTreeSet<_> = git_added_lines(&repo.path).into_iter().collect();
    let walked = walk_commits(&repo.path, &MinerOptions::default()).unwrap();
    let mined: BTreeSet<_> = walked
        .iter()
        .flat_map(|c| {
            c.diffs.iter().flat_map(move |d| {
                d.added_lines
                    .iter()
                    .map(move |l| (c.commit_hash.clone(), d.path.clone(), l.line, l.text.clone()))
            })
        })
        .collect();
    assert_eq!(mined, oracle);
}

#[test]
fn ten_commits_with_four_planted_todos() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = RepoBuilder::init(&dir.path().join("r")).unwrap();
    let mut planted = BTreeSet::new();
    let mut body = String::from("def f(x):\n    return x\n");
    for i in 0..10 {
        if PLANTED.contains(&i) {
            body.push_str(&format!("# TODO: planted note number {i}\n"));
        } else {
            body.push_str(&format!("VALUE_{i} = {i}\n"));
        }
        let oid = b.commit(&format!("c{i}"), &[("m.py", Some(body.as_str()))]).unwrap();
        if PLANTED.contains(&i) {
            planted.insert(oid.to_string());
        }
    }
    assert_eq!(planted.len(), 4);
    let commits = walk_commits(b.path(), &MinerOptions::default()).unwrap();
    let found: BTreeSet<String> = identify_todo_commits(&commits, "TODO")
        .into_iter()
        .map(|tc| tc.commit.commit_hash)
        .collect();
    assert_eq!(found, planted);
    let oracle: BTreeSet<String> = oracle_todo_lines(b.path(), "TODO").into_iter().map(|l| l.0).collect();
    assert_eq!(found, oracle);
}

#[test]
fn synthetic_project_repos_match_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CorpusConfig {
        projects: 3,
        ..Default::default()
    };
    for project in generate_corpus(&cfg, 11) {
        let path = write_project_repo(dir.path(), &project).unwrap();
        assert_eq!(mined_todo_lines(&path, "TODO"), oracle_todo_lines(&path, "TODO"));
    }
}

#[test]
fn mining_twice_gives_identical_records() {
    let dir = tempfile::tempdir().unwrap();
    let repo = annotated_repo(dir.path()).unwrap();
    let (a, sa) = mine_repository(&repo.path, "TODO", &py(), &MinerOptions::default()).unwrap();
    let (b, sb) = mine_repository(&repo.path, "TODO", &py(), &MinerOptions::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}

#[test]
fn size_cap_skips_large_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = RepoBuilder::init(&dir.path().join("r")).unwrap();
    let big = format!("# TODO: this file is far too large\n{}", "x = 1\n".repeat(400));
    b.commit("big", &[("big.py", Some(big.as_str())), ("small.py", Some("# TODO: keep this small one\n"))])
        .unwrap();
    let opts = MinerOptions { max_file_bytes: 1000 };
    let commits = walk_commits(b.path(), &opts).unwrap();
    let paths: Vec<&str> = commits[0].diffs.iter().map(|d| d.path.as_str()).collect();
    assert_eq!(paths, ["small.py"]);
}
