//! Scores the trained model and the four baselines on candidate pools built
//! from the test split of a synthetic corpus.
//!
//! ```text
//! cargo run --release --example evaluate_baselines -- [seed]
//! ```

use todo_patcher::dataset::{build_triplets, group_by_todo, split_by_project, NegativeSampler, SplitRatios};
use todo_patcher::detector::{tune_on_pools, ThresholdGrid};
use todo_patcher::encoder::{init_model, Vocabulary};
use todo_patcher::eval::{
    build_candidate_pool, evaluate_encoder, run_baseline, Baseline, BaselineParams, CandidatePool, MethodCorpus,
    TfIdfEncoder,
};
use todo_patcher::extract::ParseOptions;
use todo_patcher::io::derive_rng;
use todo_patcher::synth::{extract_projects, generate_corpus, CorpusConfig};
use todo_patcher::trainer::{train, Hyperparams};
use todo_patcher::{BlockGeometry, TripletSample};

fn pools(set: &[TripletSample], corpus: &MethodCorpus) -> Vec<CandidatePool> {
    set.iter().filter_map(|t| build_candidate_pool(t, corpus).ok()).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let geom = BlockGeometry::default();
    let grid = ThresholdGrid::default();

    let extracted = extract_projects(&generate_corpus(&CorpusConfig::default(), seed), &ParseOptions::default());
    let groups = group_by_todo(extracted.todo_methods);
    let (triplets, _) = build_triplets(&groups, &NegativeSampler::new(&extracted.methods, geom), &geom, seed);
    let split = split_by_project(triplets, SplitRatios::default(), seed)?;
    let corpus = MethodCorpus::new(extracted.methods);
    let validation = pools(&split.validation, &corpus);
    let test = pools(&split.test, &corpus);

    let hp = Hyperparams {
        seed,
        ..Default::default()
    };
    let (model, _) = train(init_model(Vocabulary::build(&split.train, 2)?, 128, seed)?, &split.train, &hp, None)?;
    let theta = tune_on_pools(&model, &validation, &geom, &grid)?.chosen;
    let m = evaluate_encoder(&model, &test, &geom, theta)?;

    println!("{} test pools\n", test.len());
    println!("{:<8} {:>6} {:>6} {:>6} {:>6} {:>6}", "approach", "P", "R", "F1", "P@1", "P@5");
    println!(
        "{:<8} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
        "model", m.detection.precision, m.detection.recall, m.detection.f1, m.ranking.p_at_k[&1], m.ranking.p_at_k[&5]
    );

    let tfidf = TfIdfEncoder::fit(&split.train)?;
    let params = BaselineParams {
        tfidf_threshold: tune_on_pools(&tfidf, &validation, &geom, &grid)?.chosen,
        ..Default::default()
    };
    for b in Baseline::ALL {
        let r = run_baseline(b, &test, &params, Some(&tfidf), &mut derive_rng(seed, b.name()))?;
        let (p1, p5) = r
            .ranking
            .as_ref()
            .map(|k| (format!("{:.3}", k.p_at_k[&1]), format!("{:.3}", k.p_at_k[&5])))
            .unwrap_or(("-".into(), "-".into()));
        println!(
            "{:<8} {:>6.3} {:>6.3} {:>6.3} {p1:>6} {p5:>6}",
            b.name(),
            r.detection.precision,
            r.detection.recall,
            r.detection.f1
        );
    }
    Ok(())
}
