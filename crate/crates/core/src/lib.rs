//! Selective term-proximity ranking.
//!
//! A positional inverted index feeds BM25 and three proximity rankers
//! (BM25TP, EXP, sequential-dependence MRF). A small backpropagation
//! network over query features decides per query whether the proximity
//! ranker is worth its cost, and the evaluation module compares never,
//! always, predicted and oracle routing.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod exec;
pub mod featselect;
pub mod features;
pub mod formats;
pub mod neural;
pub mod pipeline;
pub mod rankers;
pub mod selector;
pub mod synth;
pub mod text;

pub use corpus::{DocId, PositionalIndex};
pub use error::{Error, Result};
pub use exec::Execution;
pub use rankers::{Query, RankedList, RankerKind, ScoringParams};
