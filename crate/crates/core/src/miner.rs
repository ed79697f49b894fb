//! Repository mining: walk git histories and find TODO-introducing commits.
//!
//! A commit introduces a TODO when the marker appears in one of the lines its
//! diff *adds*. Merge commits are skipped and every other commit is diffed
//! against its first parent (the root commit against the empty tree), so a
//! TODO is attributed to exactly one commit.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use git2::{DiffOptions, ErrorCode, Oid, Patch, Repository, Sort};
use log::{debug, warn};
use serde::{Deserialize, Serialize};

/// Files above this many bytes are skipped by default (1 MiB).
pub const DEFAULT_MAX_FILE_BYTES: u64 = 1 << 20;

#[derive(Debug, thiserror::Error)]
pub enum MineError {
    #[error("{path} is not a git repository ({reason})")]
    NotARepository { path: String, reason: String },
    #[error("history of {path} is unreadable: {reason}")]
    CorruptHistory { path: String, reason: String },
}

/// One line of a diff, numbered in the post-image (added) or pre-image (removed).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub line: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub path: String,
    pub added_lines: Vec<DiffLine>,
    pub removed_lines: Vec<DiffLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub repo_id: String,
    pub commit_hash: String,
    pub parent_hash: Option<String>,
    pub diffs: Vec<FileDiff>,
}

/// An added line that carries the TODO marker.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TodoLine {
    pub path: String,
    pub line: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TodoCommit {
    pub commit: CommitRecord,
    pub todo_lines: Vec<TodoLine>,
}

/// Wire form of a [`TodoCommit`]: `{repo, hash, todos: [{path, line, text}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TodoCommitRecord {
    pub repo: String,
    pub hash: String,
    pub todos: Vec<TodoLine>,
}

impl TodoCommit {
    pub fn to_record(&self) -> TodoCommitRecord {
        TodoCommitRecord {
            repo: self.commit.repo_id.clone(),
            hash: self.commit.commit_hash.clone(),
            todos: self.todo_lines.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinerOptions {
    pub max_file_bytes: u64,
}

impl Default for MinerOptions {
    fn default() -> Self {
        Self {
            max_file_bytes: DEFAULT_MAX_FILE_BYTES,
        }
    }
}

/// Repository id used in records: the final path component.
pub fn repo_id(repo_path: &Path) -> String {
    repo_path
        .canonicalize()
        .unwrap_or_else(|_| repo_path.to_path_buf())
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "repo".to_string())
}

fn open_repo(repo_path: &Path) -> Result<Repository, MineError> {
    Repository::open(repo_path).map_err(|e| MineError::NotARepository {
        path: repo_path.display().to_string(),
        reason: e.message().to_string(),
    })
}

/// Every non-merge commit reachable from HEAD, parents before children.
///
/// Unreadable commits are logged and skipped; the walk only fails when no
/// commit at all could be read.
pub fn walk_commits(repo_path: &Path, opts: &MinerOptions) -> Result<Vec<CommitRecord>, MineError> {
    let repo = open_repo(repo_path)?;
    let path_str = repo_path.display().to_string();
    match repo.head() {
        Ok(_) => {}
        Err(e) if e.code() == ErrorCode::UnbornBranch || e.code() == ErrorCode::NotFound => {
            return Err(MineError::NotARepository {
                path: path_str,
                reason: "no commits".to_string(),
            })
        }
        Err(e) => {
            return Err(MineError::CorruptHistory {
                path: path_str,
                reason: e.message().to_string(),
            })
        }
    }
    let corrupt = |e: git2::Error| MineError::CorruptHistory {
        path: path_str.clone(),
        reason: e.message().to_string(),
    };
    let mut walk = repo.revwalk().map_err(corrupt)?;
    walk.set_sorting(Sort::TOPOLOGICAL | Sort::REVERSE).map_err(corrupt)?;
    walk.push_head().map_err(corrupt)?;

    let id = repo_id(repo_path);
    let mut records = Vec::new();
    let mut failures = 0usize;
    let mut last_error = String::new();
    for oid in walk {
        let result = oid.and_then(|oid| read_commit(&repo, &id, oid, opts));
        match result {
            Ok(Some(record)) => records.push(record),
            Ok(None) => {}
            Err(e) => {
                warn!("{}: skipping unreadable commit: {}", path_str, e.message());
                failures += 1;
                last_error = e.message().to_string();
            }
        }
    }
    if records.is_empty() && failures > 0 {
        return Err(MineError::CorruptHistory {
            path: path_str,
            reason: last_error,
        });
    }
    Ok(records)
}

fn read_commit(
    repo: &Repository,
    repo_id: &str,
    oid: Oid,
    opts: &MinerOptions,
) -> Result<Option<CommitRecord>, git2::Error> {
    let commit = repo.find_commit(oid)?;
    if commit.parent_count() > 1 {
        debug!("{repo_id}: skipping merge commit {oid}");
        return Ok(None);
    }
    let new_tree = commit.tree()?;
    let (old_tree, parent_hash) = if commit.parent_count() == 1 {
        let parent = commit.parent(0)?;
        (Some(parent.tree()?), Some(parent.id().to_string()))
    } else {
        (None, None)
    };
    let mut diff_opts = DiffOptions::new();
    diff_opts.context_lines(0);
    let diff = repo.diff_tree_to_tree(old_tree.as_ref(), Some(&new_tree), Some(&mut diff_opts))?;

    let mut diffs = Vec::new();
    for idx in 0..diff.deltas().len() {
        let delta = diff.get_delta(idx).expect("delta index in range");
        let path = delta
            .new_file()
            .path()
            .or_else(|| delta.old_file().path())
            .map(|p| p.to_string_lossy().replace('\\', "/"))
            .unwrap_or_default();
        let mut skip = None;
        for file in [delta.old_file(), delta.new_file()] {
            if file.id().is_zero() {
                continue;
            }
            let blob = repo.find_blob(file.id())?;
            if blob.is_binary() {
                skip = Some("binary");
            } else if blob.size() as u64 > opts.max_file_bytes {
                skip = Some("over size cap");
            }
        }
        if let Some(reason) = skip {
            debug!("{repo_id}@{oid}: skipping {path} ({reason})");
            continue;
        }
        let Some(patch) = Patch::from_diff(&diff, idx)? else {
            continue;
        };
        let mut file_diff = FileDiff {
            path,
            added_lines: Vec::new(),
            removed_lines: Vec::new(),
        };
        for hunk in 0..patch.num_hunks() {
            for l in 0..patch.num_lines_in_hunk(hunk)? {
                let line = patch.line_in_hunk(hunk, l)?;
                let text = String::from_utf8_lossy(line.content())
                    .trim_end_matches(['\n', '\r'])
                    .to_string();
                match line.origin() {
                    '+' => file_diff.added_lines.push(DiffLine {
                        line: line.new_lineno().unwrap_or(0),
                        text,
                    }),
                    '-' => file_diff.removed_lines.push(DiffLine {
                        line: line.old_lineno().unwrap_or(0),
                        text,
                    }),
                    _ => {}
                }
            }
        }
        file_diff.added_lines.sort_by_key(|l| l.line);
        diffs.push(file_diff);
    }
    Ok(Some(CommitRecord {
        repo_id: repo_id.to_string(),
        commit_hash: oid.to_string(),
        parent_hash,
        diffs,
    }))
}

/// Commits whose added lines contain `marker` (case-sensitive substring).
pub fn identify_todo_commits(commits: &[CommitRecord], marker: &str) -> Vec<TodoCommit> {
    assert!(!marker.is_empty(), "TODO marker must be non-empty");
    commits
        .iter()
        .filter_map(|commit| {
            let todo_lines: Vec<TodoLine> = commit
                .diffs
                .iter()
                .flat_map(|d| {
                    d.added_lines
                        .iter()
                        .filter(|l| l.text.contains(marker))
                        .map(|l| TodoLine {
                            path: d.path.clone(),
                            line: l.line,
                            text: l.text.clone(),
                        })
                })
                .collect();
            (!todo_lines.is_empty()).then(|| TodoCommit {
                commit: commit.clone(),
                todo_lines,
            })
        })
        .collect()
}

/// Keeps only TODO lines in files with one of `extensions`; `None` when nothing is left.
pub fn filter_source_files(tc: &TodoCommit, extensions: &BTreeSet<String>) -> Option<TodoCommit> {
    let todo_lines: Vec<TodoLine> = tc
        .todo_lines
        .iter()
        .filter(|t| extensions.iter().any(|ext| t.path.ends_with(ext.as_str())))
        .cloned()
        .collect();
    (!todo_lines.is_empty()).then(|| TodoCommit {
        commit: tc.commit.clone(),
        todo_lines,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineStats {
    pub commits_scanned: usize,
    pub todo_commits: usize,
    pub source_todo_commits: usize,
    pub todos: usize,
}

/// Walk + identify + extension filter for one repository.
pub fn mine_repository(
    repo_path: &Path,
    marker: &str,
    extensions: &BTreeSet<String>,
    opts: &MinerOptions,
) -> Result<(Vec<TodoCommit>, MineStats), MineError> {
    let commits = walk_commits(repo_path, opts)?;
    let todo_commits = identify_todo_commits(&commits, marker);
    let kept: Vec<TodoCommit> = todo_commits
        .iter()
        .filter_map(|tc| filter_source_files(tc, extensions))
        .collect();
    let stats = MineStats {
        commits_scanned: commits.len(),
        todo_commits: todo_commits.len(),
        source_todo_commits: kept.len(),
        todos: kept.iter().map(|tc| tc.todo_lines.len()).sum(),
    };
    Ok((kept, stats))
}

/// Subdirectories of `root` that hold a git repository, sorted by name.
pub fn discover_repositories(root: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut repos = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() && Repository::open(&path).is_ok() {
            repos.push(path);
        }
    }
    repos.sort();
    Ok(repos)
}

/// Reads file content as of a given commit.
pub struct SnapshotReader {
    repo: Repository,
}

impl SnapshotReader {
    pub fn open(repo_path: &Path) -> Result<Self, MineError> {
        Ok(Self {
            repo: open_repo(repo_path)?,
        })
    }

    /// `Ok(None)` when the path does not exist in that commit's tree.
    pub fn file_at(&self, commit_hash: &str, path: &str) -> Result<Option<Vec<u8>>, git2::Error> {
        let commit = self.repo.find_commit(Oid::from_str(commit_hash)?)?;
        let tree = commit.tree()?;
        let entry = match tree.get_path(Path::new(path)) {
            Ok(entry) => entry,
            Err(e) if e.code() == ErrorCode::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let blob = self.repo.find_blob(entry.id())?;
        Ok(Some(blob.content().to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commit(hash: &str, diffs: Vec<FileDiff>) -> CommitRecord {
        CommitRecord {
            repo_id: "r".into(),
            commit_hash: hash.into(),
            parent_hash: None,
            diffs,
        }
    }

    fn diff(path: &str, added: &[(u32, &str)], removed: &[(u32, &str)]) -> FileDiff {
        let conv = |v: &[(u32, &str)]| {
            v.iter()
                .map(|(line, text)| DiffLine {
                    line: *line,
                    text: text.to_string(),
                })
                .collect()
        };
        FileDiff {
            path: path.into(),
            added_lines: conv(added),
            removed_lines: conv(removed),
        }
    }

    #[test]
    fn added_todo_is_reported() {
        let c = commit("a", vec![diff("x.py", &[(3, "# TODO: fix encoding")], &[])]);
        let found = identify_todo_commits(&[c], "TODO");
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].todo_lines[0].text, "# TODO: fix encoding");
        assert_eq!(found[0].todo_lines[0].line, 3);
    }

    #[test]
    fn removed_todo_is_ignored() {
        let c = commit("a", vec![diff("x.py", &[(1, "x = 1")], &[(1, "# TODO: old note here")])]);
        assert!(identify_todo_commits(&[c], "TODO").is_empty());
    }

    #[test]
    fn marker_is_case_sensitive() {
        let c = commit("a", vec![diff("x.py", &[(1, "# todo: lower case")], &[])]);
        assert!(identify_todo_commits(&[c.clone()], "TODO").is_empty());
        assert_eq!(identify_todo_commits(&[c], "todo").len(), 1);
    }

    #[test]
    fn extension_filter_keeps_matching_paths() {
        let c = commit(
            "a",
            vec![
                diff("a.py", &[(1, "# TODO one two")], &[]),
                diff("README.md", &[(1, "TODO write docs")], &[]),
            ],
        );
        let tc = identify_todo_commits(&[c], "TODO").remove(0);
        let exts: BTreeSet<String> = [".py".to_string()].into();
        let kept = filter_source_files(&tc, &exts).unwrap();
        assert_eq!(kept.todo_lines.len(), 1);
        assert_eq!(kept.todo_lines[0].path, "a.py");

        let docs = commit("b", vec![diff("docs/notes.txt", &[(1, "TODO later on")], &[])]);
        let tc = identify_todo_commits(&[docs], "TODO").remove(0);
        assert!(filter_source_files(&tc, &exts).is_none());
    }

    #[test]
    fn mixed_paths_two_of_six_match() {
        let paths = ["a.py", "b.md", "c.txt", "d/e.py", "f.pyc", "g.rst"];
        let diffs = paths
            .iter()
            .map(|p| diff(p, &[(1, "# TODO do the thing")], &[]))
            .collect();
        let tc = identify_todo_commits(&[commit("a", diffs)], "TODO").remove(0);
        let exts: BTreeSet<String> = [".py".to_string()].into();
        assert_eq!(filter_source_files(&tc, &exts).unwrap().todo_lines.len(), 2);
    }

    #[test]
    fn empty_repository_has_no_commits() {
        let dir = tempfile::tempdir().unwrap();
        Repository::init(dir.path()).unwrap();
        match walk_commits(dir.path(), &MinerOptions::default()) {
            Err(MineError::NotARepository { reason, .. }) => assert_eq!(reason, "no commits"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn plain_directory_is_not_a_repository() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            walk_commits(dir.path(), &MinerOptions::default()),
            Err(MineError::NotARepository { .. })
        ));
    }
}
