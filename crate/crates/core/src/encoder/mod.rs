//! Code-block encoders.
//!
//! [`EncoderModel`] is a trainable token-embedding table: a block's embedding
//! is the L2-normalized mean of the rows of its `[SEP]`-joined token
//! sequence. Anything implementing [`BlockEncoder`] can drive detection and
//! patching, which is how the TF-IDF baseline and the untrained ablation plug in.

mod model;
mod tokenize;
mod vocab;

pub use model::{init_model, EncoderModel, MODEL_FORMAT_VERSION};
pub use tokenize::{serialize_block, tokenize, SEP, UNK};
pub use vocab::{Vocabulary, SEP_ID, UNK_ID};

use crate::dataset::CodeBlock;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncoderError {
    #[error("mean token vector is zero; cannot normalize")]
    DegenerateEmbedding,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("embedding dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Unit-L2-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values`; a zero (or non-finite) vector is degenerate.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, EncoderError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EncoderError::DegenerateEmbedding);
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine of two unit vectors, clamped to `[-1, 1]`. Equal vectors score
/// exactly 1.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EncoderError> {
    if u.dim() != v.dim() {
        return Err(EncoderError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    if u == v {
        return Ok(1.0);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Maps a code block to an embedding.
pub trait BlockEncoder: Sync {
    fn encode(&self, block: &CodeBlock) -> Result<EmbeddingVector, EncoderError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_identities() {
        let u = EmbeddingVector::normalized(vec![3.0, 4.0]).unwrap();
        let v = EmbeddingVector::normalized(vec![-4.0, 3.0]).unwrap();
        let neg = EmbeddingVector::normalized(vec![-3.0, -4.0]).unwrap();
        assert_eq!(cosine_similarity(&u, &u).unwrap(), 1.0);
        assert!(cosine_similarity(&u, &v).unwrap().abs() < 1e-15);
        assert_eq!(cosine_similarity(&u, &neg).unwrap(), -1.0);
        assert_eq!(cosine_similarity(&u, &v).unwrap(), cosine_similarity(&v, &u).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let u = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        let w = EmbeddingVector::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine_similarity(&u, &w),
            Err(EncoderError::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert_eq!(
            EmbeddingVector::normalized(vec![0.0, 0.0]),
            Err(EncoderError::DegenerateEmbedding)
        );
    }
}
