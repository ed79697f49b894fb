//! Train on a synthetic corpus, tune the threshold on planted validation
//! pools and report detection and patching quality on planted test pools.
//!
//! ```text
//! cargo run --release --example detect_and_patch -- [seed]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use todo_patcher::dataset::{build_triplets, group_by_todo, split_by_project, NegativeSampler, SplitRatios};
use todo_patcher::detector::{tune_on_pools, ThresholdGrid};
use todo_patcher::encoder::{init_model, Vocabulary};
use todo_patcher::eval::{evaluate_encoder, run_baseline, Baseline, BaselineParams, TfIdfEncoder};
use todo_patcher::extract::ParseOptions;
use todo_patcher::synth::{extract_projects, generate_corpus, generate_planted_pools, CorpusConfig, PlantedPoolConfig};
use todo_patcher::trainer::{train, Hyperparams};
use todo_patcher::BlockGeometry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let geom = BlockGeometry::default();

    let projects = generate_corpus(&CorpusConfig::default(), seed);
    let corpus = extract_projects(&projects, &ParseOptions::default());
    let groups = group_by_todo(corpus.todo_methods.clone());
    let sampler = NegativeSampler::new(&corpus.methods, geom);
    let (triplets, stats) = build_triplets(&groups, &sampler, &geom, seed);
    let split = split_by_project(triplets, SplitRatios::default(), seed)?;
    println!(
        "groups {} triplets {} (dropped {}), train {}",
        stats.groups,
        stats.emitted,
        stats.dropped,
        split.train.len()
    );

    let vocab = Vocabulary::build(&split.train, 2)?;
    let hp = Hyperparams { seed, ..Default::default() };
    let untrained = init_model(vocab, 128, seed)?;
    let (model, report) = train(untrained.clone(), &split.train, &hp, None)?;
    println!(
        "loss {:.4} -> {:.4}",
        report.epoch_losses[0],
        report.epoch_losses.last().copied().unwrap_or_default()
    );

    let materialize = |cfg: &PlantedPoolConfig, s: u64| -> Result<Vec<_>, Box<dyn std::error::Error>> {
        Ok(generate_planted_pools(cfg, s)
            .iter()
            .map(|p| p.materialize(&geom))
            .collect::<Result<Vec<_>, _>>()?)
    };
    let validation = materialize(&PlantedPoolConfig::default(), seed + 1000)?;
    let test = materialize(&PlantedPoolConfig::default(), seed + 2000)?;
    let grid = ThresholdGrid::default();

    let tfidf = TfIdfEncoder::fit(&split.train)?;
    for (name, enc) in [
        ("model", &model as &dyn todo_patcher::BlockEncoder),
        ("untrained", &untrained),
        ("tfidf", &tfidf),
    ] {
        let tuned = tune_on_pools(enc, &validation, &geom, &grid)?;
        let e = evaluate_encoder(enc, &test, &geom, tuned.chosen)?;
        println!(
            "{name:<10} theta {:.2}  P {:.3} R {:.3} F1 {:.3}  P@1 {:.3} P@5 {:.3} DCG@5 {:.3}",
            tuned.chosen,
            e.detection.precision,
            e.detection.recall,
            e.detection.f1,
            e.ranking.p_at_k[&1],
            e.ranking.p_at_k[&5],
            e.ranking.dcg_at_k[&5]
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in [Baseline::Rg, Baseline::Cem, Baseline::Csm] {
        let r = run_baseline(b, &test, &BaselineParams::default(), None, &mut rng)?;
        println!(
            "{:<10} P {:.3} R {:.3} F1 {:.3}",
            b.name(),
            r.detection.precision,
            r.detection.recall,
            r.detection.f1
        );
    }
    Ok(())
}
