//! Runs the full pipeline once per block geometry variant on a synthetic
//! corpus and prints the comparison table.
//!
//! ```text
//! cargo run --release --example geometry_variants -- [work_dir] [seed]
//! ```

use std::path::PathBuf;

use todo_patcher::fixture::write_corpus_repos;
use todo_patcher::pipeline::{compare_geometries, RunConfig};
use todo_patcher::synth::CorpusConfig;
use todo_patcher::BlockGeometry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let work = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("todo-patcher-geometry"));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);

    let repos = work.join("repos");
    if !repos.exists() {
        std::fs::create_dir_all(&repos)?;
        write_corpus_repos(&repos, &CorpusConfig::default(), seed)?;
    }
    let cfg = RunConfig::new(&repos, work.join("run"), seed);
    let cmp = compare_geometries(&cfg, &BlockGeometry::variants())?;
    print!("{}", cmp.render());
    println!("\nwritten to {}", cfg.output_dir.join("geometry").display());
    Ok(())
}
