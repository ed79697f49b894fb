use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_code_block, BlockGeometry, BlockOrigin, CodeBlock, DatasetError, MethodGroup};
use crate::extract::MethodRecord;
use crate::io::derive_rng;

/// `<anchor, positive, negative>` blocks sharing one TODO comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSample {
    pub group_id: String,
    pub project: String,
    pub anchor: CodeBlock,
    pub positive: CodeBlock,
    pub negative: CodeBlock,
}

fn eligible(m: &MethodRecord, geom: &BlockGeometry) -> bool {
    !m.has_todo && m.code_lines().len() >= geom.window_len()
}

fn negative_block<R: Rng + ?Sized>(
    method: &MethodRecord,
    todo_text: &str,
    geom: &BlockGeometry,
    rng: &mut R,
) -> CodeBlock {
    let code = method.code_lines();
    let centre = rng.random_range(0..code.len());
    let r = geom.context_radius;
    let context = code[centre.saturating_sub(r)..centre]
        .iter()
        .chain(code[centre + 1..].iter().take(r))
        .map(|c| c.text.to_string())
        .collect();
    CodeBlock {
        todo_text: todo_text.to_string(),
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
    }
}

/// Uniformly picks a TODO-free method with at least `1 + 2r` code lines, then
/// a uniform code line of it as the negative centrepiece. The TODO text is
/// the anchor's.
pub fn sample_negative<R: Rng + ?Sized>(
    corpus: &[MethodRecord],
    todo_text: &str,
    geom: &BlockGeometry,
    rng: &mut R,
) -> Result<CodeBlock, DatasetError> {
    let pool: Vec<&MethodRecord> = corpus.iter().filter(|m| eligible(m, geom)).collect();
    if pool.is_empty() {
        return Err(DatasetError::CorpusExhausted);
    }
    let method = pool[rng.random_range(0..pool.len())];
    Ok(negative_block(method, todo_text, geom, rng))
}

/// Negative source that prefers methods from the anchor's own project.
pub struct NegativeSampler<'a> {
    geom: BlockGeometry,
    by_project: BTreeMap<&'a str, Vec<&'a MethodRecord>>,
    all: Vec<&'a MethodRecord>,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(corpus: &'a [MethodRecord], geom: BlockGeometry) -> Self {
        let all: Vec<&MethodRecord> = corpus.iter().filter(|m| eligible(m, &geom)).collect();
        let mut by_project: BTreeMap<&str, Vec<&MethodRecord>> = BTreeMap::new();
        for m in &all {
            by_project.entry(m.project.as_str()).or_default().push(m);
        }
        Self { geom, by_project, all }
    }

    pub fn eligible_count(&self) -> usize {
        self.all.len()
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        project: &str,
        todo_text: &str,
        rng: &mut R,
    ) -> Result<CodeBlock, DatasetError> {
        let pool = match self.by_project.get(project) {
            Some(local) if !local.is_empty() => local,
            _ => &self.all,
        };
        if pool.is_empty() {
            return Err(DatasetError::CorpusExhausted);
        }
        let method = pool[rng.random_range(0..pool.len())];
        Ok(negative_block(method, todo_text, &self.geom, rng))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletStats {
    pub groups: usize,
    pub emitted: usize,
    /// Members that could not become a triplet: no centrepiece or no negative.
    pub dropped: usize,
}

/// `n - 1` triplets per group of `n` members, minus dropped samples.
///
/// The anchor is drawn among members that have a centrepiece. Each group uses
/// its own RNG stream derived from `(seed, group_id)`.
pub fn build_triplets(
    groups: &[MethodGroup],
    sampler: &NegativeSampler<'_>,
    geom: &BlockGeometry,
    seed: u64,
) -> (Vec<TripletSample>, TripletStats) {
    let per_group: Vec<(Vec<TripletSample>, usize)> = groups
        .par_iter()
        .map(|group| {
            let mut rng = derive_rng(seed, &group.group_id);
            let blocks: Vec<CodeBlock> = group
                .members
                .iter()
                .filter_map(|m| match build_code_block(&m.method, &m.todo, geom) {
                    Ok(b) => Some(b),
                    Err(e) => {
                        log::debug!("group {}: {e}", group.group_id);
                        None
                    }
                })
                .collect();
            let expected = group.members.len() - 1;
            if blocks.len() < 2 {
                return (Vec::new(), expected);
            }
            let anchor_idx = rng.random_range(0..blocks.len());
            let mut out = Vec::with_capacity(blocks.len() - 1);
            for (i, positive) in blocks.iter().enumerate() {
                if i == anchor_idx {
                    continue;
                }
                match sampler.sample(&group.project, &group.todo_text, &mut rng) {
                    Ok(negative) => out.push(TripletSample {
                        group_id: group.group_id.clone(),
                        project: group.project.clone(),
                        anchor: blocks[anchor_idx].clone(),
                        positive: positive.clone(),
                        negative,
                    }),
                    Err(e) => log::debug!("group {}: {e}", group.group_id),
                }
            }
            let dropped = expected - out.len();
            (out, dropped)
        })
        .collect();
    let mut stats = TripletStats {
        groups: groups.len(),
        ..Default::default()
    };
    let mut triplets = Vec::new();
    for (t, dropped) in per_group {
        stats.emitted += t.len();
        stats.dropped += dropped;
        triplets.extend(t);
    }
    (triplets, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn method(name: &str, n: usize, has_todo: bool) -> MethodRecord {
        MethodRecord {
            project: "p".into(),
            file: "f.py".into(),
            commit: "c".into(),
            qualified_name: name.into(),
            start_line: 1,
            end_line: n as u32,
            source_lines: (0..n).map(|i| format!("{name}_{i} = {i}")).collect(),
            contains_async: false,
            has_todo,
        }
    }

    #[test]
    fn seeded_negative_is_reproducible() {
        let corpus: Vec<_> = (0..10).map(|i| method(&format!("m{i}"), 8, false)).collect();
        let geom = BlockGeometry::default();
        let a = sample_negative(&corpus, "TODO: x y", &geom, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = sample_negative(&corpus, "TODO: x y", &geom, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.todo_text, "TODO: x y");
        assert!(a.context.len() <= 4);
    }

    #[test]
    fn todo_methods_are_never_negatives() {
        let corpus: Vec<_> = (0..4).map(|i| method(&format!("m{i}"), 8, true)).collect();
        let err = sample_negative(&corpus, "t", &BlockGeometry::default(), &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(err, Err(DatasetError::CorpusExhausted)));
    }

    #[test]
    fn short_methods_are_not_eligible() {
        let corpus = vec![method("tiny", 4, false)];
        let err = sample_negative(&corpus, "t", &BlockGeometry::default(), &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(err, Err(DatasetError::CorpusExhausted)));
    }

    #[test]
    fn method_choice_is_uniform() {
        // chi-square against the uniform oracle; 3 dof, 0.999 quantile = 16.27
        let corpus: Vec<_> = (0..4).map(|i| method(&format!("m{i}"), 6, false)).collect();
        let geom = BlockGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for _ in 0..1000 {
            let b = sample_negative(&corpus, "t", &geom, &mut rng).unwrap();
            *counts.entry(b.origin.method).or_default() += 1.0;
        }
        let sigma = (1000.0 * 0.25 * 0.75f64).sqrt();
        let chi2: f64 = counts.values().map(|c| (c - 250.0).powi(2) / 250.0).sum();
        for c in counts.values() {
            assert!((c - 250.0).abs() <= 3.0 * sigma, "count {c}");
        }
        assert!(chi2 < 16.27, "chi2 {chi2}");
    }

    #[test]
    fn sampler_prefers_same_project() {
        let mut other = method("o", 8, false);
        other.project = "q".into();
        let corpus = vec![method("m", 8, false), other];
        let sampler = NegativeSampler::new(&corpus, BlockGeometry::default());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(sampler.sample("p", "t", &mut rng).unwrap().origin.project, "p");
        }
        assert!(["p", "q"].contains(&sampler.sample("z", "t", &mut rng).unwrap().origin.project.as_str()));
    }
}
