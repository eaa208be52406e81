//! Benchmarking pipeline for LLM-based protein-protein-interaction
//! extraction: corpus handling, dictionary building, PROTEIN masking,
//! document-level folding, seven-section prompt assembly and greedy
//! optimization, chat dispatch (live or deterministic replay), tolerant
//! response parsing, and pair-level scoring with multi-run aggregation.

pub mod api;
pub mod chat;
pub mod corpus;
pub mod folds;
pub mod parse;
pub mod preprocess;
pub mod prompt;
pub mod runner;
pub mod score;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
