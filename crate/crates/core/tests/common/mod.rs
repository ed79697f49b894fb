//! Shared helpers for the integration tests: an oracle built on the `git`
//! command line and small fixture utilities.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use todo_patcher::miner::{identify_todo_commits, walk_commits, MinerOptions};

/// `(commit, path, post-image line, text)` of an added line.
pub type AddedLine = (String, String, u32, String);

fn git(repo: &Path, args: &[&str]) -> String {
    let out = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["-c", "core.quotepath=off"])
        .args(args)
        .output()
        .expect("git is installed");
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Every added line of every non-merge commit, parsed from
/// `git log -p --no-merges --unified=0`.
pub fn git_added_lines(repo: &Path) -> Vec<AddedLine> {
    let log = git(
        repo,
        &[
            "log",
            "-p",
            "--no-merges",
            "--unified=0",
            "--no-renames",
            "--no-color",
            "--no-ext-diff",
            "--format=@@COMMIT %H",
        ],
    );
    let mut out = Vec::new();
    let mut commit = String::new();
    let mut path: Option<String> = None;
    let mut in_header = false;
    let mut next_line = 0u32;
    for line in log.lines() {
        if let Some(h) = line.strip_prefix("@@COMMIT ") {
            commit = h.to_string();
            path = None;
            in_header = false;
        } else if line.starts_with("diff --git ") {
            in_header = true;
            path = None;
        } else if in_header {
            if let Some(p) = line.strip_prefix("+++ ") {
                path = p.strip_prefix("b/").map(str::to_string);
            } else if line.starts_with("@@ ") {
                in_header = false;
                next_line = hunk_start(line);
            }
        } else if line.starts_with("@@ ") {
            next_line = hunk_start(line);
        } else if let Some(text) = line.strip_prefix('+') {
            if let Some(p) = &path {
                out.push((commit.clone(), p.clone(), next_line, text.to_string()));
            }
            next_line += 1;
        }
    }
    out
}

fn hunk_start(header: &str) -> u32 {
    let plus = header.split_whitespace().find(|t| t.starts_with('+')).expect("hunk header");
    plus[1..].split(',').next().unwrap().parse().expect("hunk start")
}

/// Added lines containing `marker`, by brute force over the git CLI output.
pub fn oracle_todo_lines(repo: &Path, marker: &str) -> BTreeSet<AddedLine> {
    git_added_lines(repo).into_iter().filter(|l| l.3.contains(marker)).collect()
}

/// The same set as reported by the miner.
pub fn mined_todo_lines(repo: &Path, marker: &str) -> BTreeSet<AddedLine> {
    let commits = walk_commits(repo, &MinerOptions::default()).expect("walk");
    identify_todo_commits(&commits, marker)
        .into_iter()
        .flat_map(|tc| {
            let hash = tc.commit.commit_hash.clone();
            tc.todo_lines
                .into_iter()
                .map(move |t| (hash.clone(), t.path, t.line, t.text))
        })
        .collect()
}

/// `git rev-list --no-merges --count HEAD`.
pub fn git_non_merge_count(repo: &Path) -> usize {
    git(repo, &["rev-list", "--no-merges", "--count", "HEAD"]).trim().parse().unwrap()
}
