//! Synthesis of factually inconsistent summaries by masking and infilling,
//! plus training and evaluation of a binary consistency classifier.
//!
//! The usual flow is [`corpus::split_half`] → [`masker::Masker`] →
//! [`infill::generate_negatives`] → [`dataset::assemble`] →
//! [`classifier::train_classifier`] → [`harness::evaluate`].

pub mod classifier;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod infill;
pub mod label;
pub mod masker;
pub mod metrics;
pub mod seed;
pub mod spanner;
pub mod text;

pub use classifier::{
    ClassifierBackend, ClassifierHandle, ClassifierTrainConfig, ConsistencyModel, ConsistencyScore,
    MockClassifier,
};
pub use corpus::{BenchmarkRecord, BenchmarkSchema, CorpusSplit, DocumentPair, Judgments};
pub use dataset::{FilterPolicy, LabeledExample, Origin};
pub use error::{Error, ErrorKind, Result};
pub use harness::Config;
pub use infill::{GeneratedSummary, MockBackend, Seq2SeqBackend};
pub use label::Label;
pub use masker::{MaskPlan, Masker, Method, Role};
pub use spanner::{Annotator, RuleAnnotator, Span, Unit};
