//! Writes a synthetic corpus as git repositories, then runs every stage from
//! mining to evaluation and prints the results tables.
//!
//! ```text
//! cargo run --release --example full_pipeline -- [work_dir] [seed]
//! ```
//!
//! The generated `config.json` in the work directory can be reused with the
//! `todo-patcher` binary.

use std::path::PathBuf;

use todo_patcher::fixture::write_corpus_repos;
use todo_patcher::pipeline::{load_report, render_report, run_pipeline, RunConfig};
use todo_patcher::synth::CorpusConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let work = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("todo-patcher-demo"));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);

    let repos = work.join("repos");
    if !repos.exists() {
        std::fs::create_dir_all(&repos)?;
        let written = write_corpus_repos(&repos, &CorpusConfig::default(), seed)?;
        println!("wrote {} repositories under {}", written.len(), repos.display());
    }
    let cfg = RunConfig::new(&repos, work.join("run"), seed);
    std::fs::write(work.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;

    let manifest = run_pipeline(cfg.clone())?;
    println!("threshold {:?}, {} stages recorded", manifest.threshold, manifest.stages.len());
    print!("{}", render_report(&load_report(&cfg.output_dir)?));
    Ok(())
}
