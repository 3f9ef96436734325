//! Memory-augmented classifier for potentially unfair Terms of Service
//! clauses, explained through a knowledge base of legal rationales.
//!
//! One model is trained per unfairness category. Each rationale of the
//! category's knowledge base becomes a memory slot; a clause attends to the
//! slots through independent sigmoid gates, and the gates double as the
//! explanation of the prediction. Training can optionally add a max-margin
//! penalty that pushes the gates of expert-annotated rationales above the
//! others.

pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod memory;
pub mod numeric;
pub mod objective;
mod precise;
pub mod trainer;

pub use corpus::{Category, Clause, Corpus, KnowledgeBase, Label, RationaleEntry};
pub use error::{Error, Result};
pub use evaluation::{EvalConfig, EvaluationReport, Explanation};
pub use memory::{EncodedMemory, ForwardTrace, MemoryNetModel};
pub use trainer::{TrainHistory, TrainingConfig};
