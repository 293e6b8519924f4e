//! Query-focused extractive summarisation engine.
//!
//! Candidate sentences are labelled with ROUGE-SU4 against ideal answers,
//! scored by supervised neural models or a PPO policy, and the top-n
//! sentences per question type form the answer.

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod harness;
pub mod labeling;
pub mod neural;
pub mod rl;
pub mod rouge;
pub mod scorer;
pub mod summarizer;
pub mod synthetic;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
