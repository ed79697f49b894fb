//! Mining, learning and matching pipeline for TODO comments.
//!
//! The crate follows one TODO comment through its life cycle:
//!
//! 1. [`miner`] walks git histories and keeps commits whose added lines
//!    introduce a TODO marker in a source file.
//! 2. [`extract`] parses the touched files, binds each TODO to the innermost
//!    method that contains it and applies the three filtering rules.
//! 3. [`dataset`] groups methods that received byte-identical TODO text,
//!    builds anchor/positive/negative code blocks and splits project-wise.
//! 4. [`encoder`] and [`trainer`] learn a mean-pooled token embedding with a
//!    triplet margin loss.
//! 5. [`detector`] slides code-line windows over candidate methods, flags
//!    the ones whose best window matches an anchor block, and ranks patch
//!    positions.
//! 6. [`eval`] reproduces the evaluation protocol together with the RG, CEM,
//!    CSM and TF-IDF baselines, and [`pipeline`] wires all stages behind a
//!    single JSON run configuration.
//!
//! [`synth`] and [`fixture`] generate deterministic synthetic corpora and git
//! repositories used by the examples and the acceptance suite.

pub mod dataset;
pub mod detector;
pub mod encoder;
pub mod eval;
pub mod extract;
pub mod fixture;
pub mod io;
pub mod miner;
pub mod pipeline;
pub mod synth;
pub mod trainer;

pub use dataset::{BlockGeometry, CodeBlock, TripletSample};
pub use encoder::{BlockEncoder, EmbeddingVector, EncoderModel, Vocabulary};
pub use extract::{MethodRecord, TodoInstance};
pub use trainer::Hyperparams;

/// Default TODO marker.
pub const DEFAULT_MARKER: &str = "TODO";
