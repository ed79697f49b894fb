//! Triplet-margin training of the token-embedding encoder.
//!
//! The loss of one triplet is `max(|hA - hP| - |hA - hN| + margin, 0)` over
//! unit-norm embeddings. Gradients flow back through the L2 normalization and
//! the mean pooling into the embedding rows of the tokens present in the
//! triplet; every other row is untouched. Optimization is plain per-sample SGD
//! in a seeded order, so `(seed, data, hyperparameters)` fix the model bit
//! for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TripletSample;
use crate::encoder::{EmbeddingVector, EncoderError, EncoderModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("non-finite loss on training sample {sample}")]
    NonFiniteLoss { sample: usize },
    #[error("finite-difference step {0} outside [1e-7, 1e-3]")]
    InvalidStep(f64),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("training split is empty")]
    EmptyTrainSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            margin: 0.4,
            learning_rate: 0.05,
            epochs: 30,
            seed: 0,
            shuffle: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.margin > 0.0 && self.margin <= 2.0) {
            return Err(TrainError::InvalidHyperparams(format!("margin {} not in (0, 2]", self.margin)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::InvalidHyperparams(format!("learning rate {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidHyperparams("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `max(|a - p| - |a - n| + margin, 0)`.
pub fn triplet_loss(
    anchor: &EmbeddingVector,
    positive: &EmbeddingVector,
    negative: &EmbeddingVector,
    margin: f64,
) -> Result<f64, TrainError> {
    let d = anchor.dim();
    for other in [positive, negative] {
        if other.dim() != d {
            return Err(EncoderError::DimensionMismatch {
                left: d,
                right: other.dim(),
            }
            .into());
        }
    }
    let loss = distance(anchor.values(), positive.values()) - distance(anchor.values(), negative.values()) + margin;
    Ok(loss.max(0.0))
}

/// Token ids of the three blocks of a triplet.
#[derive(Debug, Clone)]
pub struct EncodedTriplet {
    pub ids: [Vec<usize>; 3],
}

impl EncodedTriplet {
    pub fn new(model: &EncoderModel, t: &TripletSample) -> Self {
        Self {
            ids: [
                model.token_ids(&t.anchor),
                model.token_ids(&t.positive),
                model.token_ids(&t.negative),
            ],
        }
    }

    pub fn touched_ids(&self) -> BTreeSet<usize> {
        self.ids.iter().flatten().copied().collect()
    }
}

struct Pooled {
    norm: f64,
    h: Vec<f64>,
}

fn pool(model: &EncoderModel, ids: &[usize]) -> Result<Pooled, EncoderError> {
    let mean = model.mean_of(ids);
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EncoderError::DegenerateEmbedding);
    }
    Ok(Pooled {
        norm,
        h: mean.iter().map(|v| v / norm).collect(),
    })
}

/// Loss plus its gradient with respect to the embedding rows, keyed by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGradient {
    pub loss: f64,
    pub rows: BTreeMap<usize, Vec<f64>>,
}

pub fn encoded_gradient(model: &EncoderModel, t: &EncodedTriplet, margin: f64) -> Result<TripletGradient, TrainError> {
    let [a, p, n] = [pool(model, &t.ids[0])?, pool(model, &t.ids[1])?, pool(model, &t.ids[2])?];
    let d_ap = distance(&a.h, &p.h);
    let d_an = distance(&a.h, &n.h);
    let raw = d_ap - d_an + margin;
    let mut rows = BTreeMap::new();
    if !raw.is_finite() || raw <= 0.0 {
        // inactive hinge: zero subgradient
        return Ok(TripletGradient { loss: raw.max(0.0), rows });
    }
    let dim = model.dim();
    // d|x - y|/dx = (x - y)/|x - y|, taken as 0 when x == y
    let unit = |x: &[f64], y: &[f64], dist: f64| -> Vec<f64> {
        if dist == 0.0 {
            vec![0.0; dim]
        } else {
            x.iter().zip(y).map(|(a, b)| (a - b) / dist).collect()
        }
    };
    let u_ap = unit(&a.h, &p.h, d_ap);
    let u_an = unit(&a.h, &n.h, d_an);
    let g_a: Vec<f64> = u_ap.iter().zip(&u_an).map(|(x, y)| x - y).collect();
    let g_p: Vec<f64> = u_ap.iter().map(|x| -x).collect();
    let g_n = u_an;

    for ((pooled, g_h), ids) in [(&a, g_a), (&p, g_p), (&n, g_n)].into_iter().zip(&t.ids) {
        // through h = m/|m|: g_m = (g_h - (g_h . h) h) / |m|
        let dot: f64 = g_h.iter().zip(&pooled.h).map(|(g, h)| g * h).sum();
        let g_m: Vec<f64> = g_h
            .iter()
            .zip(&pooled.h)
            .map(|(g, h)| (g - dot * h) / pooled.norm)
            .collect();
        // through the mean: each occurrence contributes g_m / len
        let scale = 1.0 / ids.len() as f64;
        for &id in ids {
            let row = rows.entry(id).or_insert_with(|| vec![0.0; dim]);
            for (r, g) in row.iter_mut().zip(&g_m) {
                *r += g * scale;
            }
        }
    }
    Ok(TripletGradient { loss: raw, rows })
}

pub fn triplet_gradient(model: &EncoderModel, sample: &TripletSample, margin: f64) -> Result<TripletGradient, TrainError> {
    encoded_gradient(model, &EncodedTriplet::new(model, sample), margin)
}

fn encoded_loss(model: &EncoderModel, t: &EncodedTriplet, margin: f64) -> Result<f64, TrainError> {
    let a = model.encode_ids(&t.ids[0])?;
    let p = model.encode_ids(&t.ids[1])?;
    let n = model.encode_ids(&t.ids[2])?;
    triplet_loss(&a, &p, &n, margin)
}

/// Loss of one triplet under `model`.
pub fn sample_loss(model: &EncoderModel, sample: &TripletSample, margin: f64) -> Result<f64, TrainError> {
    encoded_loss(model, &EncodedTriplet::new(model, sample), margin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Mean of per-sample losses, each measured before that sample's update.
    pub mean_loss: f64,
    pub active_fraction: f64,
}

fn run_epoch<R: Rng + ?Sized>(
    model: &mut EncoderModel,
    encoded: &[EncodedTriplet],
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<EpochStats, TrainError> {
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    if hp.shuffle {
        order.shuffle(rng);
    }
    let mut total = 0.0;
    let mut active = 0usize;
    for idx in order {
        let grad = encoded_gradient(model, &encoded[idx], hp.margin)?;
        if !grad.loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { sample: idx });
        }
        total += grad.loss;
        if grad.loss > 0.0 {
            active += 1;
            for (id, g) in &grad.rows {
                for (w, gi) in model.row_mut(*id).iter_mut().zip(g) {
                    *w -= hp.learning_rate * gi;
                }
            }
        }
    }
    let n = encoded.len().max(1) as f64;
    Ok(EpochStats {
        mean_loss: total / n,
        active_fraction: active as f64 / n,
    })
}

/// One SGD pass over the (optionally shuffled) triplets.
pub fn train_epoch<R: Rng + ?Sized>(
    model: &mut EncoderModel,
    triplets: &[TripletSample],
    hp: &Hyperparams,
    rng: &mut R,
) -> Result<EpochStats, TrainError> {
    let encoded: Vec<EncodedTriplet> = triplets.iter().map(|t| EncodedTriplet::new(model, t)).collect();
    run_epoch(model, &encoded, hp, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub active_fractions: Vec<f64>,
    pub final_model_path: Option<String>,
}

/// File name of the checkpoint written after `epoch` (1-based).
pub fn checkpoint_name(epoch: usize) -> String {
    format!("model.epoch-{epoch:03}.json")
}

/// Runs `hp.epochs` passes; no early stopping. With `checkpoint_dir`, the
/// model is saved after every epoch.
pub fn train(
    model: EncoderModel,
    train_set: &[TripletSample],
    hp: &Hyperparams,
    checkpoint_dir: Option<&Path>,
) -> Result<(EncoderModel, TrainReport), TrainError> {
    train_with_checkpoints(model, train_set, hp, checkpoint_dir, 1)
}

/// Like [`train`], saving a checkpoint every `every` epochs and after the last.
pub fn train_with_checkpoints(
    mut model: EncoderModel,
    train_set: &[TripletSample],
    hp: &Hyperparams,
    checkpoint_dir: Option<&Path>,
    every: usize,
) -> Result<(EncoderModel, TrainReport), TrainError> {
    hp.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let encoded: Vec<EncodedTriplet> = train_set.iter().map(|t| EncodedTriplet::new(&model, t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(hp.epochs),
        active_fractions: Vec::with_capacity(hp.epochs),
        final_model_path: None,
    };
    for epoch in 1..=hp.epochs {
        let stats = run_epoch(&mut model, &encoded, hp, &mut rng)?;
        log::info!(
            "epoch {epoch}/{}: mean loss {:.5}, active {:.3}",
            hp.epochs,
            stats.mean_loss,
            stats.active_fraction
        );
        report.epoch_losses.push(stats.mean_loss);
        report.active_fractions.push(stats.active_fraction);
        let due = every > 0 && (epoch % every == 0 || epoch == hp.epochs);
        if let (Some(dir), true) = (checkpoint_dir, due) {
            let path: PathBuf = dir.join(checkpoint_name(epoch));
            model.save(&path)?;
        }
    }
    Ok((model, report))
}

/// Max relative error between the analytic gradient and central differences
/// over every parameter of every token in the triplet. The denominator is
/// `max(|analytic|, |numeric|, 1e-12)`.
pub fn finite_difference_check(
    model: &EncoderModel,
    sample: &TripletSample,
    margin: f64,
    step: f64,
) -> Result<f64, TrainError> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(TrainError::InvalidStep(step));
    }
    let encoded = EncodedTriplet::new(model, sample);
    let analytic = encoded_gradient(model, &encoded, margin)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for id in encoded.touched_ids() {
        for k in 0..model.dim() {
            let original = probe.row(id)[k];
            probe.row_mut(id)[k] = original + step;
            let plus = encoded_loss(&probe, &encoded, margin)?;
            probe.row_mut(id)[k] = original - step;
            let minus = encoded_loss(&probe, &encoded, margin)?;
            probe.row_mut(id)[k] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let exact = analytic.rows.get(&id).map_or(0.0, |r| r[k]);
            let denom = exact.abs().max(numeric.abs()).max(1e-12);
            worst = worst.max((exact - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
