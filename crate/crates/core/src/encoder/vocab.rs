use std::collections::HashMap;

use super::{serialize_block, EncoderError, SEP, UNK};
use crate::dataset::TripletSample;

pub const SEP_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Dense token ids. `[SEP]` is id 0 and `[UNK]` id 1; the rest follow by
/// descending count, ties by token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from the training triplets only; tokens seen fewer than
    /// `min_freq` times map to `[UNK]`.
    pub fn build(corpus: &[TripletSample], min_freq: usize) -> Result<Self, EncoderError> {
        if corpus.is_empty() {
            return Err(EncoderError::EmptyCorpus);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in corpus {
            for block in [&t.anchor, &t.positive, &t.negative] {
                for tok in serialize_block(block) {
                    if tok != SEP {
                        *counts.entry(tok).or_default() += 1;
                    }
                }
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(tok, c)| *c >= min_freq && tok != UNK)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = [SEP.to_string(), UNK.to_string()]
            .into_iter()
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Tokens in id order; the first two must be `[SEP]` and `[UNK]`.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, EncoderError> {
        if tokens.first().map(String::as_str) != Some(SEP) || tokens.get(1).map(String::as_str) != Some(UNK) {
            return Err(EncoderError::InvalidModel("vocabulary must start with [SEP], [UNK]".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(EncoderError::InvalidModel(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BlockOrigin, CodeBlock};

    fn triplet(cen: &str) -> TripletSample {
        let block = CodeBlock {
            todo_text: String::new(),
            centrepiece: cen.into(),
            context: vec![],
            origin: BlockOrigin {
                project: "p".into(),
                file: "f".into(),
                commit: String::new(),
                method: String::new(),
                centre_line: 1,
                todo_line: None,
            },
        };
        TripletSample {
            group_id: "g".into(),
            project: "p".into(),
            anchor: block.clone(),
            positive: block.clone(),
            negative: CodeBlock {
                centrepiece: String::new(),
                ..block
            },
        }
    }

    #[test]
    fn frequency_cutoff() {
        // anchor and positive both count: "often" 6 times, "rare" 2 times
        let corpus = vec![triplet("often often often"), triplet("rare"), triplet("")];
        let v = Vocabulary::build(&corpus, 3).unwrap();
        assert_ne!(v.id("often"), UNK_ID);
        assert_eq!(v.id("rare"), UNK_ID);
        assert_eq!(v.id("never"), UNK_ID);
        assert_eq!(v.id(SEP), SEP_ID);
    }

    #[test]
    fn ordering_is_deterministic() {
        let corpus = vec![triplet("b a c a"), triplet("c")];
        let v1 = Vocabulary::build(&corpus, 1).unwrap();
        let v2 = Vocabulary::build(&corpus, 1).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.tokens(), &[SEP, UNK, "a", "c", "b"]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(Vocabulary::build(&[], 2), Err(EncoderError::EmptyCorpus)));
    }
}
