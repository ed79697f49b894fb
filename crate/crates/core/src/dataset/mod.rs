//! Triplet dataset construction.
//!
//! Methods that received byte-identical TODO text inside one project form a
//! group. One member of each group becomes the anchor; every other member
//! yields one triplet with a freshly sampled negative block, so a group of
//! `n` methods gives `n - 1` triplets. Splits are project-wise.

mod block;
mod group;
mod io;
mod split;
mod triplets;

pub use block::{build_code_block, BlockGeometry, BlockOrigin, CodeBlock, GeometryParseError};
pub use group::{group_by_todo, normalize_todo_text, MethodGroup};
pub use io::{load_dataset, serialize_dataset, SCHEMA_VERSION};
pub use split::{split_by_project, DatasetSplit, Partition, SplitRatios};
pub use triplets::{build_triplets, sample_negative, NegativeSampler, TripletSample, TripletStats};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("no code line on the centrepiece side of the TODO at {file}:{line}")]
    NoCentrepiece { file: String, line: u32 },
    #[error("no TODO-free method with enough code lines to draw a negative from")]
    CorpusExhausted,
    #[error("project-wise split needs at least 3 projects, got {0}")]
    TooFewProjects(usize),
    #[error("dataset schema version {found} does not match reader version {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("malformed record at {path}:{line_no}: {message}")]
    MalformedRecord {
        path: String,
        line_no: usize,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<crate::io::JsonlError> for DatasetError {
    fn from(e: crate::io::JsonlError) -> Self {
        match e {
            crate::io::JsonlError::Malformed {
                path,
                line_no,
                message,
            } => DatasetError::MalformedRecord {
                path,
                line_no,
                message,
            },
            other => DatasetError::Io(other.to_string()),
        }
    }
}
