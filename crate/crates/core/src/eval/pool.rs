use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::{BlockOrigin, CodeBlock, TripletSample};
use crate::extract::MethodRecord;

/// Methods of one file snapshot, keyed by `(project, file, commit)`.
#[derive(Debug, Clone, Default)]
pub struct MethodCorpus {
    by_file: BTreeMap<(String, String, String), Vec<MethodRecord>>,
}

impl MethodCorpus {
    pub fn new(methods: impl IntoIterator<Item = MethodRecord>) -> Self {
        let mut by_file: BTreeMap<(String, String, String), Vec<MethodRecord>> = BTreeMap::new();
        for m in methods {
            by_file
                .entry((m.project.clone(), m.file.clone(), m.commit.clone()))
                .or_default()
                .push(m);
        }
        for methods in by_file.values_mut() {
            methods.sort_by(|a, b| a.start_line.cmp(&b.start_line).then_with(|| a.qualified_name.cmp(&b.qualified_name)));
            methods.dedup();
        }
        Self { by_file }
    }

    pub fn file(&self, project: &str, file: &str, commit: &str) -> &[MethodRecord] {
        self.by_file
            .get(&(project.to_string(), file.to_string(), commit.to_string()))
            .map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_file.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_file.is_empty()
    }
}

/// Whether `method` is the one a block was cut from.
pub fn is_origin_method(origin: &BlockOrigin, method: &MethodRecord) -> bool {
    method.project == origin.project
        && method.file == origin.file
        && method.commit == origin.commit
        && method.qualified_name == origin.method
        && method.contains_line(origin.centre_line)
}

/// Methods checked against one anchor, with exactly one ground-truth positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub anchor: CodeBlock,
    pub methods: Vec<MethodRecord>,
    /// Index of the positive in `methods`.
    pub positive: usize,
    /// Where the missing TODO belongs in the positive.
    pub truth_line: u32,
}

/// All methods of the positive's file, anchor's method removed.
pub fn build_candidate_pool(sample: &TripletSample, corpus: &MethodCorpus) -> Result<CandidatePool, EvalError> {
    let origin = &sample.positive.origin;
    let methods: Vec<MethodRecord> = corpus
        .file(&origin.project, &origin.file, &origin.commit)
        .iter()
        .filter(|m| !is_origin_method(&sample.anchor.origin, m))
        .cloned()
        .collect();
    if methods.is_empty() {
        return Err(EvalError::EmptyPool(sample.group_id.clone()));
    }
    let positive = methods
        .iter()
        .position(|m| is_origin_method(origin, m))
        .ok_or_else(|| EvalError::PositiveMissing(sample.group_id.clone()))?;
    Ok(CandidatePool {
        anchor: sample.anchor.clone(),
        methods,
        positive,
        truth_line: origin.todo_line.unwrap_or(origin.centre_line),
    })
}
