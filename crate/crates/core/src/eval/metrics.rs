use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Default patch-hit tolerance in lines.
pub const PATCH_TOLERANCE: u32 = 2;
/// Cut-offs reported for patch ranking.
pub const RANK_CUTOFFS: [usize; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl DetectionMetrics {
    /// P is 0 when nothing is flagged, R is 0 with no positives, F1 is 0 when P + R = 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Flags raised over one pool and which entry is the true positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolOutcome {
    pub flagged: Vec<bool>,
    pub positive: usize,
}

impl PoolOutcome {
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (i, &f) in self.flagged.iter().enumerate() {
            match (i == self.positive, f) {
                (true, true) => tp += 1,
                (true, false) => fn_ += 1,
                (false, true) => fp += 1,
                (false, false) => {}
            }
        }
        (tp, fp, fn_)
    }
}

/// Micro-averaged over all pools.
pub fn detection_metrics(outcomes: &[PoolOutcome]) -> DetectionMetrics {
    let (tp, fp, fn_) = outcomes.iter().map(PoolOutcome::counts).fold((0, 0, 0), |acc, c| {
        (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2)
    });
    DetectionMetrics::from_counts(tp, fp, fn_)
}

/// Per-pool P/R/F1, averaged. Counts are the micro totals.
pub fn macro_detection_metrics(outcomes: &[PoolOutcome]) -> DetectionMetrics {
    let micro = detection_metrics(outcomes);
    if outcomes.is_empty() {
        return micro;
    }
    let n = outcomes.len() as f64;
    let mut sums = (0.0, 0.0, 0.0);
    for o in outcomes {
        let (tp, fp, fn_) = o.counts();
        let m = DetectionMetrics::from_counts(tp, fp, fn_);
        sums.0 += m.precision;
        sums.1 += m.recall;
        sums.2 += m.f1;
    }
    DetectionMetrics {
        precision: sums.0 / n,
        recall: sums.1 / n,
        f1: sums.2 / n,
        ..micro
    }
}

fn hit(centre: u32, truth: u32, tolerance: u32) -> bool {
    centre.abs_diff(truth) <= tolerance
}

/// 1-based rank of the first hit within the top `k`.
fn first_hit(ranked: &[u32], truth: u32, k: usize, tolerance: u32) -> Option<usize> {
    ranked.iter().take(k).position(|&c| hit(c, truth, tolerance)).map(|i| i + 1)
}

/// Fraction of samples with a hit among the top-`k` centre lines.
pub fn patch_p_at_k(ranked: &[Vec<u32>], truths: &[u32], k: usize, tolerance: u32) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    assert_eq!(ranked.len(), truths.len(), "one truth per sample");
    if ranked.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .zip(truths)
        .filter(|(r, &t)| first_hit(r, t, k, tolerance).is_some())
        .count();
    hits as f64 / ranked.len() as f64
}

/// Binary-relevance DCG with first-hit credit, `1 / log2(rank + 1)`, averaged.
pub fn dcg_at_k(ranked: &[Vec<u32>], truths: &[u32], k: usize, tolerance: u32) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    assert_eq!(ranked.len(), truths.len(), "one truth per sample");
    if ranked.is_empty() {
        return 0.0;
    }
    let total: f64 = ranked
        .iter()
        .zip(truths)
        .filter_map(|(r, &t)| first_hit(r, t, k, tolerance))
        .map(|rank| 1.0 / ((rank + 1) as f64).log2())
        .sum();
    total / ranked.len() as f64
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub p_at_k: BTreeMap<usize, f64>,
    pub dcg_at_k: BTreeMap<usize, f64>,
}

impl RankingMetrics {
    pub fn compute(ranked: &[Vec<u32>], truths: &[u32], tolerance: u32) -> Self {
        let mut out = Self::default();
        for k in RANK_CUTOFFS {
            out.p_at_k.insert(k, patch_p_at_k(ranked, truths, k, tolerance));
            out.dcg_at_k.insert(k, dcg_at_k(ranked, truths, k, tolerance));
        }
        out
    }
}
