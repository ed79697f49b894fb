//! Deterministic git repositories for examples and tests.
//!
//! Commits use a fixed author and a clock that advances one minute per
//! commit, so identical content always produces identical hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use git2::{IndexAddOption, Oid, Repository, ResetType, Signature, Time};

use crate::synth::{generate_corpus, CorpusConfig, SynthProject};

const EPOCH: i64 = 1_600_000_000;

/// Builds a history commit by commit on top of HEAD.
pub struct RepoBuilder {
    repo: Repository,
    clock: i64,
}

impl RepoBuilder {
    pub fn init(path: &Path) -> Result<Self, git2::Error> {
        std::fs::create_dir_all(path).map_err(|e| git2::Error::from_str(&e.to_string()))?;
        let repo = Repository::init(path)?;
        repo.set_head("refs/heads/main")?;
        Ok(Self { repo, clock: EPOCH })
    }

    pub fn path(&self) -> &Path {
        self.repo.workdir().expect("non-bare repository")
    }

    fn signature(&mut self) -> Result<Signature<'static>, git2::Error> {
        self.clock += 60;
        Signature::new("Fixture Author", "fixture@example.com", &Time::new(self.clock, 0))
    }

    fn apply(&self, changes: &[(&str, Option<&str>)]) -> Result<(), git2::Error> {
        let io = |e: std::io::Error| git2::Error::from_str(&e.to_string());
        for (path, content) in changes {
            let full = self.path().join(path);
            match content {
                Some(text) => {
                    if let Some(parent) = full.parent() {
                        std::fs::create_dir_all(parent).map_err(io)?;
                    }
                    std::fs::write(&full, text).map_err(io)?;
                }
                None => {
                    if full.exists() {
                        std::fs::remove_file(&full).map_err(io)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn write_commit(&mut self, message: &str, parents: &[Oid]) -> Result<Oid, git2::Error> {
        let mut index = self.repo.index()?;
        index.add_all(["*"], IndexAddOption::DEFAULT, None)?;
        index.update_all(["*"], None)?;
        index.write()?;
        let tree_id = index.write_tree()?;
        let sig = self.signature()?;
        let tree = self.repo.find_tree(tree_id)?;
        let parents: Vec<git2::Commit<'_>> = parents
            .iter()
            .map(|p| self.repo.find_commit(*p))
            .collect::<Result<_, _>>()?;
        let refs: Vec<&git2::Commit<'_>> = parents.iter().collect();
        self.repo.commit(Some("HEAD"), &sig, &sig, message, &tree, &refs)
    }

    fn head(&self) -> Option<Oid> {
        self.repo.head().ok().and_then(|h| h.target())
    }

    /// Writes (`Some`) or deletes (`None`) files and commits on HEAD.
    pub fn commit(&mut self, message: &str, changes: &[(&str, Option<&str>)]) -> Result<Oid, git2::Error> {
        self.apply(changes)?;
        let parents: Vec<Oid> = self.head().into_iter().collect();
        self.write_commit(message, &parents)
    }

    /// Moves HEAD, index and worktree to `oid`.
    pub fn reset_to(&mut self, oid: Oid) -> Result<(), git2::Error> {
        let obj = self.repo.find_object(oid, None)?;
        self.repo.reset(&obj, ResetType::Hard, None)
    }

    /// Commits with HEAD and `other` as parents; `changes` must produce the
    /// merged tree.
    pub fn merge(&mut self, message: &str, other: Oid, changes: &[(&str, Option<&str>)]) -> Result<Oid, git2::Error> {
        self.apply(changes)?;
        let head = self.head().ok_or_else(|| git2::Error::from_str("merge needs a HEAD commit"))?;
        self.write_commit(message, &[head, other])
    }
}

/// Non-method TODO noise added to synthetic project repositories.
const README: &str = "# Synthetic project\n\nGenerated fixture.\n";
const README_TODO: &str = "# Synthetic project\n\nGenerated fixture.\n\nTODO: document the public interface\n";
const NOISE_PY: &str = "\
# TODO: split this helper module into smaller pieces
import sys

BANNER = 'TODO: this string is not a comment'


def helper(value):
    # TODO: later
    return value
";
const BROKEN_PY: &str = "\
def broken(x:
    # TODO: repair the signature of this function
    return x
";
const CHANGELOG: &str = "Changelog\n=========\n\n- initial import\n";
const CHANGELOG_SIDE: &str = "Changelog\n=========\n\n- initial import\n- side branch notes\n";

/// Writes a synthetic project as a git repository under `root/<name>`.
///
/// History: an import of every file without TODO comments, one commit per
/// file that introduces its TODOs, and noise commits covering a README TODO,
/// a removed TODO, a TODO in a string, a two-word TODO, a module-level TODO,
/// a file that does not parse and a merge commit.
pub fn write_project_repo(root: &Path, project: &SynthProject) -> Result<PathBuf, git2::Error> {
    let path = root.join(&project.name);
    let mut b = RepoBuilder::init(&path)?;
    let plain: Vec<(String, String)> = project
        .files
        .iter()
        .map(|f| (f.path.clone(), f.render(false).text))
        .collect();
    let mut changes: Vec<(&str, Option<&str>)> = plain.iter().map(|(p, t)| (p.as_str(), Some(t.as_str()))).collect();
    changes.push(("README.md", Some(README)));
    changes.push(("CHANGELOG.txt", Some(CHANGELOG)));
    b.commit("Initial import", &changes)?;

    let base = b.head().expect("initial commit");
    let side = b.commit("Update changelog", &[("CHANGELOG.txt", Some(CHANGELOG_SIDE))])?;
    b.reset_to(base)?;

    for f in project.files.iter().filter(|f| f.has_todos()) {
        let text = f.render(true).text;
        b.commit(&format!("Note pending work in {}", f.path), &[(f.path.as_str(), Some(text.as_str()))])?;
    }
    b.commit("Add readme todo", &[("README.md", Some(README_TODO))])?;
    b.commit("Add helpers", &[("pkg/helpers.py", Some(NOISE_PY))])?;
    b.commit("Add experimental parser", &[("pkg/broken.py", Some(BROKEN_PY))])?;
    b.commit("Resolve readme todo", &[("README.md", Some(README))])?;
    b.merge("Merge branch 'side'", side, &[("CHANGELOG.txt", Some(CHANGELOG_SIDE))])?;
    Ok(path)
}

/// Generates a synthetic corpus and writes every project as a repository
/// under `root`.
pub fn write_corpus_repos(root: &Path, cfg: &CorpusConfig, seed: u64) -> Result<Vec<PathBuf>, git2::Error> {
    generate_corpus(cfg, seed)
        .iter()
        .map(|p| write_project_repo(root, p))
        .collect()
}

/// Hand-written repository with annotated mining and filtering outcomes.
pub struct AnnotatedRepo {
    pub path: PathBuf,
    /// Commit hash by commit message.
    pub commits: BTreeMap<String, String>,
}

const A_V1: &str = "\
class Loader:
    def read(self, path):
        data = open(path).read()
        return data

    def size(self, path):
        return len(self.read(path))
";

const A_V2: &str = "\
class Loader:
    def read(self, path):
        # TODO: handle missing files gracefully here
        data = open(path).read()
        return data

    def size(self, path):
        return len(self.read(path))
";

const A_V3: &str = A_V1;

const A_V4: &str = "\
class Loader:
    def read(self, path):
        data = open(path).read()
        return data

    def size(self, path):
        n = len(self.read(path))
        return n
";

const A_V5: &str = "\
class Loader:
    def read(self, path):
        # TODO: stream large files instead of reading everything
        data = open(path).read()
        return data

    def size(self, path):
        # TODO: cache sizes per path to avoid rereading
        n = len(self.read(path))
        return n
";

const B_PY: &str = "\
def tidy(x):
    # TODO: fix
    return x.strip()
";

const C_PY: &str = "\
def message():
    text = \"TODO: not a real comment here\"
    return text
";

const D_PY: &str = "\
# TODO: reorganise this module into a package
VALUE = 3


def value():
    return VALUE
";

const E_PY: &str = "\
def parse(line:
    # TODO: repair this broken parser signature
    return line
";

const F_PY: &str = "\
def lookup(table, key):
    # TODO: cache the lookup results between calls
    return table.get(key)
";

/// Builds the annotated repository under `root/annotated`.
pub fn annotated_repo(root: &Path) -> Result<AnnotatedRepo, git2::Error> {
    let path = root.join("annotated");
    let mut b = RepoBuilder::init(&path)?;
    let mut commits = BTreeMap::new();
    let mut record = |msg: &str, oid: Oid| {
        commits.insert(msg.to_string(), oid.to_string());
    };
    record("initial", b.commit("initial", &[("a.py", Some(A_V1)), ("README.md", Some("Notes\n"))])?);
    record("todo in method", b.commit("todo in method", &[("a.py", Some(A_V2))])?);
    record("docs todo", b.commit("docs todo", &[("README.md", Some("Notes\nTODO: write the docs\n"))])?);
    record("remove todo", b.commit("remove todo", &[("a.py", Some(A_V3))])?);
    record("short todo", b.commit("short todo", &[("b.py", Some(B_PY))])?);
    record("string todo", b.commit("string todo", &[("c.py", Some(C_PY))])?);
    record("module todo", b.commit("module todo", &[("d.py", Some(D_PY))])?);
    record("broken file", b.commit("broken file", &[("e.py", Some(E_PY))])?);
    let base = b.head().expect("history");
    let side = b.commit("side feature", &[("f.py", Some(F_PY))])?;
    record("side feature", side);
    b.reset_to(base)?;
    record("main tweak", b.commit("main tweak", &[("a.py", Some(A_V4))])?);
    record("merge side", b.merge("merge side", side, &[("f.py", Some(F_PY))])?);
    record("two todos", b.commit("two todos", &[("a.py", Some(A_V5))])?);
    Ok(AnnotatedRepo { path, commits })
}
