//! Coarse-to-fine, sketch-based semantic parsing.
//!
//! A question is parsed in three stages: a multi-task model predicts the
//! logical-form sketch class and labels parameter spans, question/logical-form
//! pattern pairs drawn from the predicted class are turned into full
//! candidates, and candidates are reranked by a fusion of pattern matching,
//! predicate-entity co-occurrence and conditional generation scores.

pub mod data;
pub mod error;
pub mod genscore;
pub mod learn;
pub mod lf;
pub mod matchers;
pub mod multitask;
pub mod pipeline;

pub use error::{Error, Result};
