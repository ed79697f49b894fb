//! Evaluation protocol: candidate pools, detection and ranking metrics, and
//! the RG / CEM / CSM / TFIDF baselines.
//!
//! Detection metrics are micro-averaged over pools, with the macro average
//! kept as a secondary figure. Patch ranking is measured on each pool's
//! positive method: a ranked window hits when its centre line lies within
//! two lines of the true TODO position.

mod baselines;
mod metrics;
mod pool;

pub use baselines::{
    cem_match, csm_overlap, normalize_whitespace, run_baseline, Baseline, BaselineParams, BaselineResult,
    TfIdfEncoder,
};
pub use metrics::{
    dcg_at_k, detection_metrics, macro_detection_metrics, patch_p_at_k, DetectionMetrics, PoolOutcome,
    RankingMetrics, PATCH_TOLERANCE, RANK_CUTOFFS,
};
pub use pool::{build_candidate_pool, is_origin_method, CandidatePool, MethodCorpus};

use serde::{Deserialize, Serialize};

use crate::dataset::BlockGeometry;
use crate::detector::{anchor_id, pool_scores, DetectionRecord};
use crate::encoder::{BlockEncoder, EncoderError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("empty candidate pool for group {0}")]
    EmptyPool(String),
    #[error("positive method of group {0} not found in its file")]
    PositiveMissing(String),
    #[error("unknown baseline {0:?}")]
    UnknownBaseline(String),
    #[error("TFIDF baseline needs a fitted encoder")]
    MissingTfIdf,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Detection and patching quality of one encoder at a fixed threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderEvaluation {
    pub threshold: f64,
    pub detection: DetectionMetrics,
    pub macro_detection: DetectionMetrics,
    pub ranking: RankingMetrics,
    pub outcomes: Vec<PoolOutcome>,
    pub records: Vec<DetectionRecord>,
    /// Pools whose anchor could not be encoded.
    pub skipped: usize,
}

pub fn evaluate_encoder<E: BlockEncoder + ?Sized>(
    encoder: &E,
    pools: &[CandidatePool],
    geom: &BlockGeometry,
    threshold: f64,
) -> Result<EncoderEvaluation, EvalError> {
    let mut outcomes = Vec::with_capacity(pools.len());
    let mut records = Vec::new();
    let mut ranked = Vec::with_capacity(pools.len());
    let mut truths = Vec::with_capacity(pools.len());
    let mut skipped = 0;
    for pool in pools {
        let (scores, methods) = match pool_scores(encoder, pool, geom) {
            Ok(s) => s,
            Err(EncoderError::DegenerateEmbedding) => {
                log::warn!("anchor {} is degenerate; pool skipped", anchor_id(&pool.anchor));
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        outcomes.push(scores.outcome(threshold));
        ranked.push(methods[pool.positive].ranked_centres());
        truths.push(pool.truth_line);
        records.extend(methods.iter().map(|m| DetectionRecord::new(&pool.anchor, m, threshold)));
    }
    Ok(EncoderEvaluation {
        threshold,
        detection: detection_metrics(&outcomes),
        macro_detection: macro_detection_metrics(&outcomes),
        ranking: RankingMetrics::compute(&ranked, &truths, PATCH_TOLERANCE),
        outcomes,
        records,
        skipped,
    })
}
