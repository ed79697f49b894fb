//! Sliding-window detection of TODO-missed methods and patch ranking.
//!
//! Every window of `1 + 2r` consecutive code lines of a candidate method
//! becomes a block whose centrepiece is the middle line and whose TODO text is
//! the anchor's. A method's score is its best window's cosine similarity to
//! the anchor block; it is flagged when that score reaches the threshold. The
//! ranked windows double as patch recommendations: the missing TODO belongs
//! right above the centre line of the best window.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BlockGeometry, BlockOrigin, CodeBlock, TripletSample};
use crate::encoder::{cosine_similarity, BlockEncoder, EmbeddingVector, EncoderError};
use crate::eval::{detection_metrics, is_origin_method, CandidatePool, EvalError, PoolOutcome};
use crate::extract::MethodRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("threshold {0} outside [-1, 1]")]
    InvalidThreshold(f64),
    #[error("invalid threshold grid: {0}")]
    InvalidGrid(String),
    #[error("no usable validation pool")]
    EmptyValidation,
}

/// A window of a candidate method, encoded like a training negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateBlock {
    pub block: CodeBlock,
    pub method_id: String,
    pub start_line: u32,
    pub centre_line: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBlock {
    pub block: CandidateBlock,
    pub score: f64,
}

/// Stable `project/file:method:line` label of an anchor block.
pub fn anchor_id(anchor: &CodeBlock) -> String {
    let o = &anchor.origin;
    format!("{}/{}:{}:{}", o.project, o.file, o.method, o.centre_line)
}

/// One block per stride-1 window over the method's code lines. A method
/// shorter than the window yields a single truncated block centred on its
/// middle line; a method without code lines yields nothing.
pub fn extract_candidate_blocks(method: &MethodRecord, anchor_todo: &str, geom: &BlockGeometry) -> Vec<CandidateBlock> {
    let code = method.code_lines();
    if code.is_empty() {
        return Vec::new();
    }
    let r = geom.context_radius;
    let w = geom.window_len();
    let windows: Vec<(usize, usize, usize)> = if code.len() < w {
        vec![(0, (code.len() - 1) / 2, code.len())]
    } else {
        (0..=code.len() - w).map(|s| (s, s + r, s + w)).collect()
    };
    let method_id = method.method_id();
    windows
        .into_iter()
        .map(|(start, centre, end)| {
            let context = code[start..centre]
                .iter()
                .chain(&code[centre + 1..end])
                .map(|c| c.text.to_string())
                .collect();
            CandidateBlock {
                block: CodeBlock {
                    todo_text: anchor_todo.to_string(),
                    centrepiece: code[centre].text.to_string(),
                    context,
                    origin: BlockOrigin {
                        project: method.project.clone(),
                        file: method.file.clone(),
                        commit: method.commit.clone(),
                        method: method.qualified_name.clone(),
                        centre_line: code[centre].line,
                        todo_line: None,
                    },
                },
                method_id: method_id.clone(),
                start_line: code[start].line,
                centre_line: code[centre].line,
            }
        })
        .collect()
}

/// Descending score, then earliest start line, then window content.
fn rank_order(a: &ScoredBlock, b: &ScoredBlock) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.block.start_line.cmp(&b.block.start_line))
        .then_with(|| a.block.block.centrepiece.cmp(&b.block.block.centrepiece))
        .then_with(|| a.block.block.context.cmp(&b.block.block.context))
}

/// All windows of one method scored against an anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method_id: String,
    /// `-inf` when the method has no scorable window.
    pub best_score: f64,
    pub ranked: Vec<ScoredBlock>,
}

impl MethodScore {
    pub fn best_block(&self) -> Option<&CandidateBlock> {
        self.ranked.first().map(|s| &s.block)
    }

    pub fn ranked_centres(&self) -> Vec<u32> {
        self.ranked.iter().map(|s| s.block.centre_line).collect()
    }
}

/// Scores `method` against an already encoded anchor. Degenerate windows are
/// skipped.
pub fn score_method_with<E: BlockEncoder + ?Sized>(
    encoder: &E,
    anchor_embedding: &EmbeddingVector,
    anchor_todo: &str,
    method: &MethodRecord,
    geom: &BlockGeometry,
) -> Result<MethodScore, EncoderError> {
    let mut ranked = Vec::new();
    for block in extract_candidate_blocks(method, anchor_todo, geom) {
        match encoder.encode(&block.block) {
            Ok(h) => {
                let score = cosine_similarity(anchor_embedding, &h)?;
                ranked.push(ScoredBlock { block, score });
            }
            Err(EncoderError::DegenerateEmbedding) => {
                log::debug!("skipping degenerate window at {}:{}", block.method_id, block.start_line);
            }
            Err(e) => return Err(e),
        }
    }
    ranked.sort_by(rank_order);
    Ok(MethodScore {
        method_id: method.method_id(),
        best_score: ranked.first().map_or(f64::NEG_INFINITY, |s| s.score),
        ranked,
    })
}

pub fn score_method<E: BlockEncoder + ?Sized>(
    encoder: &E,
    anchor: &CodeBlock,
    method: &MethodRecord,
    geom: &BlockGeometry,
) -> Result<MethodScore, EncoderError> {
    let h = encoder.encode(anchor)?;
    score_method_with(encoder, &h, &anchor.todo_text, method, geom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub method_id: String,
    pub best_score: f64,
    pub best_block: Option<CandidateBlock>,
    pub flagged: bool,
}

fn check_threshold(theta: f64) -> Result<(), DetectError> {
    if (-1.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(DetectError::InvalidThreshold(theta))
    }
}

/// Scores the anchor against every method of the pool except its own, in parallel.
pub fn score_pool<E: BlockEncoder + ?Sized>(
    encoder: &E,
    anchor: &CodeBlock,
    pool: &[MethodRecord],
    geom: &BlockGeometry,
) -> Result<Vec<MethodScore>, EncoderError> {
    let h = encoder.encode(anchor)?;
    pool.par_iter()
        .filter(|m| !is_origin_method(&anchor.origin, m))
        .map(|m| score_method_with(encoder, &h, &anchor.todo_text, m, geom))
        .collect()
}

/// Flags every pool method whose best window scores at least `theta`.
pub fn detect<E: BlockEncoder + ?Sized>(
    encoder: &E,
    anchor: &CodeBlock,
    pool: &[MethodRecord],
    geom: &BlockGeometry,
    theta: f64,
) -> Result<Vec<DetectionResult>, DetectError> {
    check_threshold(theta)?;
    Ok(score_pool(encoder, anchor, pool, geom)?
        .into_iter()
        .map(|s| DetectionResult {
            flagged: s.best_score >= theta,
            best_block: s.best_block().cloned(),
            best_score: s.best_score,
            method_id: s.method_id,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecommendation {
    pub method_id: String,
    pub ranked_blocks: Vec<ScoredBlock>,
    /// Centre line of the rank-1 block.
    pub recommended_line: Option<u32>,
}

impl From<MethodScore> for PatchRecommendation {
    fn from(s: MethodScore) -> Self {
        Self {
            recommended_line: s.best_block().map(|b| b.centre_line),
            method_id: s.method_id,
            ranked_blocks: s.ranked,
        }
    }
}

/// Ranks every window of `method`; the caller decides whether it was flagged.
pub fn patch<E: BlockEncoder + ?Sized>(
    encoder: &E,
    anchor: &CodeBlock,
    method: &MethodRecord,
    geom: &BlockGeometry,
) -> Result<PatchRecommendation, EncoderError> {
    score_method(encoder, anchor, method, geom).map(Into::into)
}

/// `{start, start + step, ..., end}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        Self {
            start: 0.60,
            end: 1.00,
            step: 0.01,
        }
    }
}

impl ThresholdGrid {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(DetectError::InvalidGrid(format!("step {}", self.step)));
        }
        if !(-1.0 <= self.start && self.start <= self.end && self.end <= 1.0) {
            return Err(DetectError::InvalidGrid(format!("bounds [{}, {}]", self.start, self.end)));
        }
        Ok(())
    }

    /// Grid values, each rounded to 1e-9 so that `0.6 + 30 * 0.01` reads 0.9.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub grid: Vec<GridPoint>,
    /// Highest F1, smallest threshold on ties.
    pub chosen: f64,
    pub pools: usize,
}

/// Best score per pool method and the index of the positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolScores {
    pub best: Vec<f64>,
    pub positive: usize,
}

impl PoolScores {
    pub fn outcome(&self, theta: f64) -> PoolOutcome {
        PoolOutcome {
            flagged: self.best.iter().map(|&s| s >= theta).collect(),
            positive: self.positive,
        }
    }
}

/// P/R/F1 of every grid value over pre-scored pools.
pub fn threshold_sweep(pools: &[PoolScores], grid: &ThresholdGrid) -> Result<ThresholdReport, DetectError> {
    grid.validate()?;
    if pools.is_empty() {
        return Err(DetectError::EmptyValidation);
    }
    let points: Vec<GridPoint> = grid
        .values()
        .into_par_iter()
        .map(|theta| {
            let outcomes: Vec<PoolOutcome> = pools.iter().map(|p| p.outcome(theta)).collect();
            let m = detection_metrics(&outcomes);
            GridPoint {
                threshold: theta,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
            }
        })
        .collect();
    let mut chosen = points[0];
    for p in &points[1..] {
        if p.f1 > chosen.f1 {
            chosen = *p;
        }
    }
    Ok(ThresholdReport {
        chosen: chosen.threshold,
        grid: points,
        pools: pools.len(),
    })
}

/// Scores a pool once; thresholds are applied afterwards.
pub fn pool_scores<E: BlockEncoder + ?Sized>(
    encoder: &E,
    pool: &CandidatePool,
    geom: &BlockGeometry,
) -> Result<(PoolScores, Vec<MethodScore>), EncoderError> {
    let h = encoder.encode(&pool.anchor)?;
    let scores: Vec<MethodScore> = pool
        .methods
        .par_iter()
        .map(|m| score_method_with(encoder, &h, &pool.anchor.todo_text, m, geom))
        .collect::<Result<_, _>>()?;
    Ok((
        PoolScores {
            best: scores.iter().map(|s| s.best_score).collect(),
            positive: pool.positive,
        },
        scores,
    ))
}

/// Grid search over pools that are already built.
pub fn tune_on_pools<E: BlockEncoder + ?Sized>(
    encoder: &E,
    pools: &[CandidatePool],
    geom: &BlockGeometry,
    grid: &ThresholdGrid,
) -> Result<ThresholdReport, DetectError> {
    let mut scored = Vec::with_capacity(pools.len());
    for pool in pools {
        match pool_scores(encoder, pool, geom) {
            Ok((s, _)) => scored.push(s),
            Err(EncoderError::DegenerateEmbedding) => {
                log::warn!("validation anchor {} is degenerate; pool skipped", anchor_id(&pool.anchor));
            }
            Err(e) => return Err(e.into()),
        }
    }
    threshold_sweep(&scored, grid)
}

/// Builds a pool per validation triplet and picks the F1-maximizing threshold.
/// Samples whose pool cannot be built are skipped and logged.
pub fn tune_threshold<E, F>(
    encoder: &E,
    validation: &[TripletSample],
    pool_builder: F,
    geom: &BlockGeometry,
    grid: &ThresholdGrid,
) -> Result<ThresholdReport, DetectError>
where
    E: BlockEncoder + ?Sized,
    F: Fn(&TripletSample) -> Result<CandidatePool, EvalError>,
{
    if validation.is_empty() {
        return Err(DetectError::EmptyValidation);
    }
    let pools: Vec<CandidatePool> = validation
        .iter()
        .filter_map(|t| match pool_builder(t) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("no validation pool for group {}: {e}", t.group_id);
                None
            }
        })
        .collect();
    tune_on_pools(encoder, &pools, geom, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCentre {
    pub centre_line: u32,
    pub score: f64,
}

/// One line of the detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub anchor_id: String,
    pub method_id: String,
    /// Absent when the method has no scorable window.
    pub best_score: Option<f64>,
    pub flagged: bool,
    pub recommended_line: Option<u32>,
    pub ranked: Vec<RankedCentre>,
}

/// Report lines list at most this many ranked windows.
pub const REPORTED_RANKS: usize = 5;

impl DetectionRecord {
    pub fn new(anchor: &CodeBlock, score: &MethodScore, theta: f64) -> Self {
        Self {
            anchor_id: anchor_id(anchor),
            method_id: score.method_id.clone(),
            best_score: score.best_score.is_finite().then_some(score.best_score),
            flagged: score.best_score >= theta,
            recommended_line: score.best_block().map(|b| b.centre_line),
            ranked: score
                .ranked
                .iter()
                .take(REPORTED_RANKS)
                .map(|s| RankedCentre {
                    centre_line: s.block.centre_line,
                    score: s.score,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::build_code_block;
    use crate::extract::TodoInstance;

    fn method(name: &str, start: u32, lines: &[&str]) -> MethodRecord {
        MethodRecord {
            project: "p".into(),
            file: "f.py".into(),
            commit: "c".into(),
            qualified_name: name.into(),
            start_line: start,
            end_line: start + lines.len() as u32 - 1,
            source_lines: lines.iter().map(|s| s.to_string()).collect(),
            contains_async: false,
            has_todo: false,
        }
    }

    fn numbered(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("v{i} = {i}")).collect()
    }

    fn refs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }

    /// Bag of exact lines: each distinct line text is one axis.
    struct LineBag;

    impl BlockEncoder for LineBag {
        fn encode(&self, b: &CodeBlock) -> Result<EmbeddingVector, EncoderError> {
            let mut v = vec![0.0; 64];
            for line in std::iter::once(&b.centrepiece).chain(&b.context) {
                let h = crate::io::digest_bytes(line.as_bytes());
                v[usize::from_str_radix(&h[..4], 16).unwrap() % 64] += 1.0;
            }
            // centrepiece counts double
            let h = crate::io::digest_bytes(b.centrepiece.as_bytes());
            v[usize::from_str_radix(&h[..4], 16).unwrap() % 64] += 1.0;
            EmbeddingVector::normalized(v)
        }
    }

    #[test]
    fn seven_lines_three_windows() {
        let lines = numbered(7);
        let blocks = extract_candidate_blocks(&method("m", 1, &refs(&lines)), "TODO x", &BlockGeometry::default());
        let centres: Vec<u32> = blocks.iter().map(|b| b.centre_line).collect();
        assert_eq!(centres, [3, 4, 5]);
        assert_eq!(blocks[0].block.context, ["v1 = 1", "v2 = 2", "v4 = 4", "v5 = 5"]);
        assert!(blocks.iter().all(|b| b.block.todo_text == "TODO x"));
    }

    #[test]
    fn short_and_exact_methods() {
        let three = numbered(3);
        let b = extract_candidate_blocks(&method("m", 1, &refs(&three)), "t", &BlockGeometry::default());
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].centre_line, 2);
        assert_eq!(b[0].block.context.len(), 2);
        let five = numbered(5);
        assert_eq!(extract_candidate_blocks(&method("m", 1, &refs(&five)), "t", &BlockGeometry::default()).len(), 1);
        assert!(extract_candidate_blocks(&method("m", 1, &["", "# c"]), "t", &BlockGeometry::default()).is_empty());
    }

    #[test]
    fn blank_lines_do_not_break_windows() {
        let m = method("m", 10, &["a = 1", "", "b = 2", "# note", "c = 3", "d = 4", "e = 5"]);
        let blocks = extract_candidate_blocks(&m, "t", &BlockGeometry::default());
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].start_line, 10);
        assert_eq!(blocks[0].centre_line, 14);
    }

    fn todo_method() -> (MethodRecord, CodeBlock) {
        let lines = [
            "def f(x):",
            "a = load(x)",
            "b = clean(a)",
            "",
            "c = a.strip().lower()",
            "d = c + b",
            "e = save(d)",
            "return e",
        ];
        let m = method("f", 1, &lines);
        let todo = TodoInstance {
            project: "p".into(),
            comment_text: "TODO: avoid double normalisation here".into(),
            file: "f.py".into(),
            line: 4,
            commit_hash: "c".into(),
            enclosing_method: Some(0),
        };
        let anchor = build_code_block(&m, &todo, &BlockGeometry::default()).unwrap();
        (m, anchor)
    }

    #[test]
    fn identical_method_scores_one_and_patches_true_line() {
        let (m, anchor) = todo_method();
        let copy = MethodRecord {
            file: "g.py".into(),
            qualified_name: "g".into(),
            ..m
        };
        let s = score_method(&LineBag, &anchor, &copy, &BlockGeometry::default()).unwrap();
        assert!((s.best_score - 1.0).abs() < 1e-9);
        let rec = patch(&LineBag, &anchor, &copy, &BlockGeometry::default()).unwrap();
        assert_eq!(rec.recommended_line, Some(anchor.origin.centre_line));
    }

    #[test]
    fn ties_prefer_earlier_windows() {
        let lines = ["x = 1"; 12];
        let m = method("m", 1, &lines);
        let (_, anchor) = todo_method();
        let rec = patch(&LineBag, &anchor, &m, &BlockGeometry::default()).unwrap();
        let starts: Vec<u32> = rec.ranked_blocks.iter().map(|s| s.block.start_line).collect();
        assert_eq!(starts, (1..=8).collect::<Vec<_>>());
        assert_eq!(rec.recommended_line, Some(3));
    }

    #[test]
    fn thresholds_at_the_bounds() {
        let (m, anchor) = todo_method();
        let dup = MethodRecord {
            qualified_name: "dup".into(),
            start_line: 100,
            end_line: 107,
            ..m.clone()
        };
        let other = method("other", 200, &refs(&numbered(9)));
        let empty = method("empty", 300, &["", ""]);
        let pool = vec![m.clone(), dup, other, empty];
        let at_one = detect(&LineBag, &anchor, &pool, &BlockGeometry::default(), 1.0).unwrap();
        let names: Vec<_> = at_one.iter().filter(|r| r.flagged).map(|r| r.method_id.as_str()).collect();
        assert_eq!(names, ["f.py:dup:100"]);
        // the anchor's own method never comes back
        assert_eq!(at_one.len(), 3);
        let all = detect(&LineBag, &anchor, &pool, &BlockGeometry::default(), -1.0).unwrap();
        assert_eq!(all.iter().filter(|r| r.flagged).count(), 2);
        assert!(all.iter().any(|r| r.best_score == f64::NEG_INFINITY && !r.flagged));
        assert_eq!(
            detect(&LineBag, &anchor, &pool, &BlockGeometry::default(), 1.5),
            Err(DetectError::InvalidThreshold(1.5))
        );
    }

    #[test]
    fn grid_has_41_rounded_points() {
        let v = ThresholdGrid::default().values();
        assert_eq!(v.len(), 41);
        assert_eq!(v[0], 0.6);
        assert_eq!(v[30], 0.9);
        assert_eq!(v[40], 1.0);
        assert!(ThresholdGrid { step: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn sweep_picks_smallest_best_threshold() {
        let pools = vec![
            PoolScores { best: vec![0.95, 0.7, 0.62], positive: 0 },
            PoolScores { best: vec![0.8, 0.91], positive: 1 },
        ];
        let r = threshold_sweep(&pools, &ThresholdGrid::default()).unwrap();
        // every threshold in (0.8, 0.91] gives P = R = 1
        assert_eq!(r.chosen, 0.81);
        let recalls: Vec<f64> = r.grid.iter().map(|g| g.recall).collect();
        assert!(recalls.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn record_hides_missing_scores() {
        let (_, anchor) = todo_method();
        let s = MethodScore {
            method_id: "m".into(),
            best_score: f64::NEG_INFINITY,
            ranked: vec![],
        };
        let r = DetectionRecord::new(&anchor, &s, 0.9);
        assert_eq!(r.best_score, None);
        assert!(!r.flagged);
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"best_score\":null"));
    }
}
