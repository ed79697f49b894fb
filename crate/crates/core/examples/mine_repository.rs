//! Mines TODO-introducing commits from a git repository.
//!
//! ```text
//! cargo run --example mine_repository -- [repo_path] [marker]
//! ```
//!
//! Without a path, a small annotated fixture repository is built in a
//! temporary directory and mined instead.

use std::collections::BTreeSet;
use std::path::PathBuf;

use todo_patcher::fixture::annotated_repo;
use todo_patcher::miner::{mine_repository, MinerOptions};
use todo_patcher::DEFAULT_MARKER;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let tmp = tempfile::tempdir()?;
    let repo = match args.next() {
        Some(p) => PathBuf::from(p),
        None => annotated_repo(tmp.path())?.path,
    };
    let marker = args.next().unwrap_or_else(|| DEFAULT_MARKER.to_string());
    let extensions: BTreeSet<String> = [".py".to_string()].into();

    let (commits, stats) = mine_repository(&repo, &marker, &extensions, &MinerOptions::default())?;
    for tc in &commits {
        println!("{}", &tc.commit.commit_hash[..10]);
        for t in &tc.todo_lines {
            println!("    {}:{}  {}", t.path, t.line, t.text.trim());
        }
    }
    println!(
        "{} commits scanned, {} add `{marker}`, {} in source files, {} lines",
        stats.commits_scanned, stats.todo_commits, stats.source_todo_commits, stats.todos
    );
    Ok(())
}
