use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_encoder, CandidatePool, DetectionMetrics, EvalError, PoolOutcome, RankingMetrics};
use crate::dataset::{BlockGeometry, CodeBlock, TripletSample};
use crate::encoder::{serialize_block, tokenize, BlockEncoder, EmbeddingVector, EncoderError, SEP};
use crate::eval::{detection_metrics, macro_detection_metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Baseline {
    /// Random guess.
    #[serde(rename = "RG")]
    Rg,
    /// Exact centrepiece match.
    #[serde(rename = "CEM")]
    Cem,
    /// Centrepiece token-overlap match.
    #[serde(rename = "CSM")]
    Csm,
    /// TF-IDF bag-of-words cosine.
    #[serde(rename = "TFIDF")]
    Tfidf,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::Rg, Baseline::Cem, Baseline::Csm, Baseline::Tfidf];

    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Rg => "RG",
            Baseline::Cem => "CEM",
            Baseline::Csm => "CSM",
            Baseline::Tfidf => "TFIDF",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| EvalError::UnknownBaseline(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub rg_probability: f64,
    pub csm_tau: f64,
    /// Detection threshold for TFIDF, usually tuned on validation pools.
    pub tfidf_threshold: f64,
    pub geometry: BlockGeometry,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            rg_probability: 0.5,
            csm_tau: 0.5,
            tfidf_threshold: 0.9,
            geometry: BlockGeometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub name: String,
    pub detection: DetectionMetrics,
    pub macro_detection: DetectionMetrics,
    pub ranking: Option<RankingMetrics>,
}

/// Collapses whitespace runs and trims.
pub fn normalize_whitespace(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whether any code line of `lines` equals the centrepiece up to whitespace.
pub fn cem_match<'a>(centrepiece: &str, lines: impl IntoIterator<Item = &'a str>) -> bool {
    let target = normalize_whitespace(centrepiece);
    !target.is_empty() && lines.into_iter().any(|l| normalize_whitespace(l) == target)
}

/// Largest `|A ∩ B| / |A|` over lines `B`, with `A` the centrepiece tokens.
pub fn csm_overlap<'a>(centrepiece: &str, lines: impl IntoIterator<Item = &'a str>) -> f64 {
    let a: BTreeSet<String> = tokenize(centrepiece).into_iter().collect();
    if a.is_empty() {
        return 0.0;
    }
    lines
        .into_iter()
        .map(|l| {
            let b: BTreeSet<String> = tokenize(l).into_iter().collect();
            a.intersection(&b).count() as f64 / a.len() as f64
        })
        .fold(0.0, f64::max)
}

/// TF-IDF bag-of-words vectors over the `[SEP]`-joined block tokens. Tokens
/// outside the fitted vocabulary are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfEncoder {
    index: HashMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdfEncoder {
    /// Document frequencies over every block of the triplets; smoothed idf
    /// `ln((1 + N) / (1 + df)) + 1`.
    pub fn fit(triplets: &[TripletSample]) -> Result<Self, EncoderError> {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut docs = 0usize;
        for t in triplets {
            for block in [&t.anchor, &t.positive, &t.negative] {
                docs += 1;
                let distinct: BTreeSet<String> = serialize_block(block).into_iter().filter(|t| t != SEP).collect();
                for tok in distinct {
                    *df.entry(tok).or_default() += 1;
                }
            }
        }
        if df.is_empty() {
            return Err(EncoderError::EmptyCorpus);
        }
        let n = docs as f64;
        let mut index = HashMap::with_capacity(df.len());
        let mut idf = Vec::with_capacity(df.len());
        for (i, (tok, d)) in df.into_iter().enumerate() {
            index.insert(tok, i);
            idf.push(((1.0 + n) / (1.0 + d as f64)).ln() + 1.0);
        }
        Ok(Self { index, idf })
    }

    pub fn vocab_len(&self) -> usize {
        self.idf.len()
    }
}

impl BlockEncoder for TfIdfEncoder {
    fn encode(&self, block: &CodeBlock) -> Result<EmbeddingVector, EncoderError> {
        let mut v = vec![0.0; self.idf.len()];
        for tok in serialize_block(block) {
            if let Some(&i) = self.index.get(&tok) {
                v[i] += self.idf[i];
            }
        }
        EmbeddingVector::normalized(v)
    }
}

fn line_outcomes(pools: &[CandidatePool], flag: impl Fn(&CandidatePool, usize) -> bool) -> Vec<PoolOutcome> {
    pools
        .iter()
        .map(|p| PoolOutcome {
            flagged: (0..p.methods.len()).map(|i| flag(p, i)).collect(),
            positive: p.positive,
        })
        .collect()
}

fn method_lines(pool: &CandidatePool, i: usize) -> Vec<&str> {
    pool.methods[i].code_lines().into_iter().map(|c| c.text).collect()
}

/// Runs one baseline over the pools. TFIDF needs a fitted encoder and also
/// reports patch ranking.
pub fn run_baseline<R: Rng + ?Sized>(
    baseline: Baseline,
    pools: &[CandidatePool],
    params: &BaselineParams,
    tfidf: Option<&TfIdfEncoder>,
    rng: &mut R,
) -> Result<BaselineResult, EvalError> {
    let (outcomes, ranking) = match baseline {
        Baseline::Rg => {
            let p = params.rg_probability;
            let outcomes = pools
                .iter()
                .map(|pool| PoolOutcome {
                    flagged: (0..pool.methods.len()).map(|_| rng.random_bool(p)).collect(),
                    positive: pool.positive,
                })
                .collect();
            (outcomes, None)
        }
        Baseline::Cem => (
            line_outcomes(pools, |p, i| cem_match(&p.anchor.centrepiece, method_lines(p, i))),
            None,
        ),
        Baseline::Csm => (
            line_outcomes(pools, |p, i| {
                csm_overlap(&p.anchor.centrepiece, method_lines(p, i)) >= params.csm_tau
            }),
            None,
        ),
        Baseline::Tfidf => {
            let enc = tfidf.ok_or(EvalError::MissingTfIdf)?;
            let eval = evaluate_encoder(enc, pools, &params.geometry, params.tfidf_threshold)?;
            return Ok(BaselineResult {
                name: baseline.name().to_string(),
                detection: eval.detection,
                macro_detection: eval.macro_detection,
                ranking: Some(eval.ranking),
            });
        }
    };
    Ok(BaselineResult {
        name: baseline.name().to_string(),
        detection: detection_metrics(&outcomes),
        macro_detection: macro_detection_metrics(&outcomes),
        ranking,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::BlockOrigin;
    use crate::extract::MethodRecord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cem_needs_verbatim_line() {
        assert!(cem_match("return  x.strip()", ["a = 1", "return x.strip()"]));
        assert!(!cem_match("return x.strip()", ["a = 1", "return y.strip()"]));
        assert!(!cem_match("", [""]));
    }

    #[test]
    fn csm_token_set_overlap() {
        let o = csm_overlap("return x.strip()", ["return y.strip()"]);
        assert!((o - 2.0 / 3.0).abs() < 1e-15);
        assert!(o >= 0.5);
        assert_eq!(csm_overlap("return x", ["a = b"]), 0.0);
        assert_eq!(csm_overlap("()", ["a"]), 0.0);
    }

    #[test]
    fn cem_implies_csm() {
        let lines = ["a = f(b, c)", "return a"];
        for cen in ["a = f(b, c)", "return a", "return b"] {
            if cem_match(cen, lines) {
                assert_eq!(csm_overlap(cen, lines), 1.0);
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for b in Baseline::ALL {
            assert_eq!(b.name().parse::<Baseline>().unwrap(), b);
        }
        assert!("NiCad".parse::<Baseline>().is_err());
    }

    fn block(cen: &str) -> CodeBlock {
        CodeBlock {
            todo_text: "TODO fix this later".into(),
            centrepiece: cen.into(),
            context: vec![],
            origin: BlockOrigin {
                project: "p".into(),
                file: "a.py".into(),
                commit: "c".into(),
                method: "anchor".into(),
                centre_line: 2,
                todo_line: Some(1),
            },
        }
    }

    fn method(name: &str, lines: &[&str]) -> MethodRecord {
        MethodRecord {
            project: "p".into(),
            file: "b.py".into(),
            commit: "c".into(),
            qualified_name: name.into(),
            start_line: 1,
            end_line: lines.len() as u32,
            source_lines: lines.iter().map(|s| s.to_string()).collect(),
            contains_async: false,
            has_todo: false,
        }
    }

    fn pool() -> CandidatePool {
        CandidatePool {
            anchor: block("return x.strip()"),
            methods: vec![
                method("hit", &["def hit(x):", "return x.strip()"]),
                method("near", &["def near(y):", "return y.strip()"]),
                method("far", &["def far():", "pass"]),
            ],
            positive: 0,
            truth_line: 2,
        }
    }

    #[test]
    fn exact_and_overlap_baselines_on_a_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = BaselineParams::default();
        let cem = run_baseline(Baseline::Cem, &[pool()], &p, None, &mut rng).unwrap();
        assert_eq!((cem.detection.tp, cem.detection.fp), (1, 0));
        let csm = run_baseline(Baseline::Csm, &[pool()], &p, None, &mut rng).unwrap();
        assert_eq!((csm.detection.tp, csm.detection.fp), (1, 1));
        assert!(matches!(
            run_baseline(Baseline::Tfidf, &[pool()], &p, None, &mut rng),
            Err(EvalError::MissingTfIdf)
        ));
    }

    #[test]
    fn random_guess_is_seeded() {
        let pools = vec![pool(); 50];
        let p = BaselineParams::default();
        let a = run_baseline(Baseline::Rg, &pools, &p, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = run_baseline(Baseline::Rg, &pools, &p, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        let flagged = a.detection.tp + a.detection.fp;
        assert!(flagged > 40 && flagged < 110, "{flagged} of 150");
    }

    #[test]
    fn tfidf_weights_rare_tokens_higher() {
        let t = |a: &str, p: &str, n: &str| TripletSample {
            group_id: "g".into(),
            project: "p".into(),
            anchor: block(a),
            positive: block(p),
            negative: block(n),
        };
        let corpus = vec![t("common rare", "common", "common"), t("common", "common", "other")];
        let enc = TfIdfEncoder::fit(&corpus).unwrap();
        let h = enc.encode(&block("common rare")).unwrap();
        let rare = enc.index["rare"];
        let common = enc.index["common"];
        assert!(h.values()[rare] > h.values()[common]);
        assert_eq!(enc.encode(&CodeBlock { todo_text: String::new(), ..block("unseen") }), Err(EncoderError::DegenerateEmbedding));
    }
}
