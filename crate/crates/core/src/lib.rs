//! Lexicon-verified cascades of complementary CTC classifiers.

pub mod cascade;
pub mod cli;
pub mod cohort_sim;
pub mod ctc_decode;
pub mod error;
pub mod lexicon;
pub mod metrics;
pub mod postgram;
pub mod pruning;
pub mod report;
pub mod seeding;
pub mod source;

pub use error::{Error, Result};
