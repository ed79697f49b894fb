use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{serialize_block, BlockEncoder, EmbeddingVector, EncoderError, Vocabulary};
use crate::dataset::CodeBlock;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Token-embedding table, `|V| x d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    vocab: Vocabulary,
    dim: usize,
    weights: Vec<f64>,
}

/// Entries i.i.d. uniform in `[-0.5/d, 0.5/d]`, deterministic per `(vocab, d, seed)`.
pub fn init_model(vocab: Vocabulary, dim: usize, seed: u64) -> Result<EncoderModel, EncoderError> {
    if dim < 2 {
        return Err(EncoderError::InvalidDimension(dim));
    }
    let bound = 0.5 / dim as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..vocab.len() * dim)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Ok(EncoderModel { vocab, dim, weights })
}

#[derive(Deserialize)]
struct ModelFile {
    version: u32,
    d: usize,
    vocab: Vec<String>,
    matrix: Vec<Vec<f64>>,
}

impl EncoderModel {
    pub fn from_weights(vocab: Vocabulary, dim: usize, weights: Vec<f64>) -> Result<Self, EncoderError> {
        if dim < 2 {
            return Err(EncoderError::InvalidDimension(dim));
        }
        if weights.len() != vocab.len() * dim {
            return Err(EncoderError::InvalidModel(format!(
                "matrix has {} entries, expected {} x {}",
                weights.len(),
                vocab.len(),
                dim
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(EncoderError::InvalidModel("non-finite weight".into()));
        }
        Ok(Self { vocab, dim, weights })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.weights[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.weights[id * self.dim..(id + 1) * self.dim]
    }

    pub fn token_ids(&self, block: &CodeBlock) -> Vec<usize> {
        serialize_block(block).iter().map(|t| self.vocab.id(t)).collect()
    }

    /// Mean of the rows of `ids` (not normalized).
    pub fn mean_of(&self, ids: &[usize]) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for &id in ids {
            for (m, w) in mean.iter_mut().zip(self.row(id)) {
                *m += w;
            }
        }
        let n = ids.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    pub fn encode_ids(&self, ids: &[usize]) -> Result<EmbeddingVector, EncoderError> {
        EmbeddingVector::normalized(self.mean_of(ids))
    }

    /// Writes `{version, d, vocab, matrix}`; every float carries 17
    /// significant digits so the file round-trips exactly.
    pub fn to_json(&self) -> String {
        let mut out = String::with_capacity(self.weights.len() * 26);
        let vocab = serde_json::to_string(self.vocab.tokens()).expect("tokens serialize");
        write!(out, "{{\"version\":{MODEL_FORMAT_VERSION},\"d\":{},\"vocab\":{vocab},\"matrix\":[", self.dim).unwrap();
        for (r, row) in self.weights.chunks(self.dim).enumerate() {
            if r > 0 {
                out.push(',');
            }
            out.push('[');
            for (c, w) in row.iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{w:.16e}").unwrap();
            }
            out.push(']');
        }
        out.push_str("]}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self, EncoderError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| EncoderError::InvalidModel(e.to_string()))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(EncoderError::InvalidModel(format!(
                "model format version {} (reader expects {MODEL_FORMAT_VERSION})",
                file.version
            )));
        }
        if file.matrix.iter().any(|row| row.len() != file.d) {
            return Err(EncoderError::InvalidModel("ragged matrix".into()));
        }
        let vocab = Vocabulary::from_tokens(file.vocab)?;
        Self::from_weights(vocab, file.d, file.matrix.into_iter().flatten().collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| EncoderError::Io(e.to_string()))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| EncoderError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let text = std::fs::read_to_string(path).map_err(|e| EncoderError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl BlockEncoder for EncoderModel {
    fn encode(&self, block: &CodeBlock) -> Result<EmbeddingVector, EncoderError> {
        self.encode_ids(&self.token_ids(block))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::BlockOrigin;
    use crate::encoder::{SEP, UNK};
    use proptest::prelude::*;

    fn vocab(extra: &[&str]) -> Vocabulary {
        let mut tokens = vec![SEP.to_string(), UNK.to_string()];
        tokens.extend(extra.iter().map(|s| s.to_string()));
        Vocabulary::from_tokens(tokens).unwrap()
    }

    fn block(todo: &str, cen: &str, con: &[&str]) -> CodeBlock {
        CodeBlock {
            todo_text: todo.into(),
            centrepiece: cen.into(),
            context: con.iter().map(|s| s.to_string()).collect(),
            origin: BlockOrigin {
                project: "p".into(),
                file: "f".into(),
                commit: String::new(),
                method: String::new(),
                centre_line: 1,
                todo_line: None,
            },
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(vocab(&["x", "y"]), 8, 11).unwrap();
        let b = init_model(vocab(&["x", "y"]), 8, 11).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.weights().len(), 4 * 8);
        assert!(a.weights().iter().all(|w| w.abs() <= 0.5 / 8.0));
        assert!(matches!(init_model(vocab(&[]), 1, 0), Err(EncoderError::InvalidDimension(1))));
    }

    #[test]
    fn single_row_mean_is_that_row() {
        let m = init_model(vocab(&["x"]), 4, 3).unwrap();
        let h = m.encode_ids(&[2]).unwrap();
        let expect = EmbeddingVector::normalized(m.row(2).to_vec()).unwrap();
        assert_eq!(h, expect);
    }

    #[test]
    fn opposite_rows_are_degenerate() {
        let v = vocab(&["a", "b"]);
        let w = vec![0.0, 0.0, 0.0, 0.0, 1.0, -2.0, -1.0, 2.0];
        let m = EncoderModel::from_weights(v, 2, w).unwrap();
        assert_eq!(m.encode_ids(&[2, 3]), Err(EncoderError::DegenerateEmbedding));
    }

    #[test]
    fn eight_token_block_matches_hand_arithmetic() {
        // tokens: fix it [SEP] x y [SEP] y z  -> ids 2 3 0 4 5 0 5 6
        let v = vocab(&["fix", "it", "x", "y", "z"]);
        let rows: [[f64; 3]; 7] = [
            [0.5, 0.0, -0.25],
            [9.0, 9.0, 9.0],
            [1.0, 2.0, 3.0],
            [-1.0, 0.5, 0.0],
            [0.25, 0.25, 0.25],
            [2.0, -1.0, 1.0],
            [0.0, 0.0, 4.0],
        ];
        let m = EncoderModel::from_weights(v, 3, rows.iter().flatten().copied().collect()).unwrap();
        let b = block("fix it", "x y", &["y z"]);
        assert_eq!(m.token_ids(&b), vec![2, 3, 0, 4, 5, 0, 5, 6]);
        // sums per column, done by hand:
        // c0: 1 - 1 + .5 + .25 + 2 + .5 + 2 + 0 = 5.25
        // c1: 2 + .5 + 0 + .25 - 1 + 0 - 1 + 0 = 0.75
        // c2: 3 + 0 - .25 + .25 + 1 - .25 + 1 + 4 = 8.75
        let mean: [f64; 3] = [5.25 / 8.0, 0.75 / 8.0, 8.75 / 8.0];
        let norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
        let h = m.encode(&b).unwrap();
        for (got, want) in h.values().iter().zip(mean.iter().map(|x| x / norm)) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = init_model(vocab(&["a", "b", "c"]), 5, 99).unwrap();
        let text = m.to_json();
        let back = EncoderModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn bag_of_tokens_within_a_segment() {
        let m = init_model(vocab(&["a", "b", "c"]), 6, 5).unwrap();
        let h1 = m.encode(&block("t", "a b c", &[])).unwrap();
        let h2 = m.encode(&block("t", "c a b", &[])).unwrap();
        for (x, y) in h1.values().iter().zip(h2.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn encoded_vectors_have_unit_norm(seed in 0u64..500, cen in "[abc ]{0,20}") {
            let m = init_model(vocab(&["a", "b", "c"]), 16, seed).unwrap();
            let h = m.encode(&block("todo", &cen, &["b c"])).unwrap();
            prop_assert!((h.norm() - 1.0).abs() <= 1e-6);
        }
    }
}
