//! Trains the token-embedding encoder on a synthetic corpus, checks the
//! analytic gradient against finite differences and saves per-epoch
//! checkpoints.
//!
//! ```text
//! cargo run --release --example train_encoder -- [out_dir] [seed] [epochs]
//! ```

use std::path::PathBuf;

use todo_patcher::dataset::{build_triplets, group_by_todo, split_by_project, NegativeSampler, SplitRatios};
use todo_patcher::encoder::{cosine_similarity, init_model};
use todo_patcher::extract::ParseOptions;
use todo_patcher::synth::{extract_projects, generate_corpus, CorpusConfig};
use todo_patcher::trainer::{finite_difference_check, train, Hyperparams};
use todo_patcher::{BlockEncoder, BlockGeometry, EncoderModel, Vocabulary};

fn ordered(model: &EncoderModel, set: &[todo_patcher::TripletSample]) -> usize {
    set.iter()
        .filter(|t| {
            let enc = |b| model.encode(b).unwrap();
            let a = enc(&t.anchor);
            cosine_similarity(&a, &enc(&t.positive)).unwrap() > cosine_similarity(&a, &enc(&t.negative)).unwrap()
        })
        .count()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("todo-patcher-model"));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let geom = BlockGeometry::default();

    let corpus = extract_projects(&generate_corpus(&CorpusConfig::default(), seed), &ParseOptions::default());
    let groups = group_by_todo(corpus.todo_methods);
    let (triplets, _) = build_triplets(&groups, &NegativeSampler::new(&corpus.methods, geom), &geom, seed);
    let split = split_by_project(triplets, SplitRatios::default(), seed)?;

    let vocab = Vocabulary::build(&split.train, 2)?;
    let model = init_model(vocab, 128, seed)?;
    let hp = Hyperparams {
        seed,
        epochs,
        ..Default::default()
    };
    let worst = split.train[..10]
        .iter()
        .map(|t| finite_difference_check(&model, t, hp.margin, 1e-5))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("gradient check on 10 triplets: max relative error {worst:.2e}");

    let before = ordered(&model, &split.test);
    let (model, report) = train(model, &split.train, &hp, Some(&out.join("checkpoints")))?;
    let after = ordered(&model, &split.test);
    println!(
        "test triplets with cos(A,P) > cos(A,N): {before} -> {after} of {}",
        split.test.len()
    );
    println!(
        "final loss {:.4}, active {:.2}",
        report.epoch_losses.last().copied().unwrap_or_default(),
        report.active_fractions.last().copied().unwrap_or_default()
    );
    model.save(&out.join("model.json"))?;
    println!("saved {}", out.join("model.json").display());
    Ok(())
}
