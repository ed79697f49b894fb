//! Validation F1 of the tuned model for a range of triplet margins.
//!
//! ```text
//! cargo run --release --example margin_sweep -- [seed] [projects] [learning_rate]
//! ```

use todo_patcher::dataset::{build_triplets, group_by_todo, split_by_project, NegativeSampler, SplitRatios};
use todo_patcher::detector::{tune_on_pools, ThresholdGrid};
use todo_patcher::encoder::{init_model, Vocabulary};
use todo_patcher::eval::{build_candidate_pool, CandidatePool, MethodCorpus};
use todo_patcher::extract::ParseOptions;
use todo_patcher::synth::{extract_projects, generate_corpus, CorpusConfig};
use todo_patcher::trainer::{train, Hyperparams};
use todo_patcher::BlockGeometry;

const MARGINS: [f64; 6] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let projects: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let lr: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(Hyperparams::default().learning_rate);
    let geom = BlockGeometry::default();

    let cfg = CorpusConfig {
        projects,
        ..Default::default()
    };
    let extracted = extract_projects(&generate_corpus(&cfg, seed), &ParseOptions::default());
    let groups = group_by_todo(extracted.todo_methods);
    let (triplets, _) = build_triplets(&groups, &NegativeSampler::new(&extracted.methods, geom), &geom, seed);
    let split = split_by_project(triplets, SplitRatios::default(), seed)?;
    let corpus = MethodCorpus::new(extracted.methods);
    let validation: Vec<CandidatePool> = split
        .validation
        .iter()
        .filter_map(|t| build_candidate_pool(t, &corpus).ok())
        .collect();
    let vocab = Vocabulary::build(&split.train, 2)?;

    println!("{} train triplets, {} validation pools, lr {lr}", split.train.len(), validation.len());
    println!("{:>6} {:>6} {:>8}", "margin", "theta", "val F1");
    for margin in MARGINS {
        let hp = Hyperparams {
            seed,
            margin,
            learning_rate: lr,
            ..Default::default()
        };
        let (model, _) = train(init_model(vocab.clone(), 128, seed)?, &split.train, &hp, None)?;
        let r = tune_on_pools(&model, &validation, &geom, &ThresholdGrid::default())?;
        let best = r.grid.iter().find(|g| g.threshold == r.chosen).expect("chosen is on the grid");
        println!("{margin:>6.1} {:>6.2} {:>8.3}", r.chosen, best.f1);
    }
    Ok(())
}
