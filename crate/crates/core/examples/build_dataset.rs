//! Builds triplets from a synthetic corpus, splits them by project and writes
//! the dataset files.
//!
//! ```text
//! cargo run --example build_dataset -- [out_dir] [seed]
//! ```

use std::path::PathBuf;

use todo_patcher::dataset::{
    build_triplets, group_by_todo, load_dataset, serialize_dataset, split_by_project, NegativeSampler, Partition,
    SplitRatios,
};
use todo_patcher::extract::ParseOptions;
use todo_patcher::synth::{extract_projects, generate_corpus, CorpusConfig};
use todo_patcher::BlockGeometry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("todo-patcher-dataset"));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let geom = BlockGeometry::default();

    let corpus = extract_projects(&generate_corpus(&CorpusConfig::default(), seed), &ParseOptions::default());
    let groups = group_by_todo(corpus.todo_methods);
    let sampler = NegativeSampler::new(&corpus.methods, geom);
    let (triplets, stats) = build_triplets(&groups, &sampler, &geom, seed);
    println!("{} groups -> {} triplets, {} dropped", stats.groups, stats.emitted, stats.dropped);

    let split = split_by_project(triplets, SplitRatios::default(), seed)?;
    for p in [Partition::Train, Partition::Validation, Partition::Test] {
        println!("{p:?}: {} triplets from {} projects", split.partition(p).len(), split.projects(p).len());
    }
    serialize_dataset(&split, &out)?;
    let back = load_dataset(&out)?;
    assert_eq!(back.train.len(), split.train.len());

    let t = &split.train[0];
    println!("\nsample triplet from group {}:", t.group_id);
    println!("  todo      {}", t.anchor.todo_text);
    println!("  anchor    {}", t.anchor.centrepiece);
    println!("  positive  {}", t.positive.centrepiece);
    println!("  negative  {}", t.negative.centrepiece);
    println!("\nwritten to {}", out.display());
    Ok(())
}
