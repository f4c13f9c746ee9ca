//! Patient-level symptom extraction by fusing an expert-structured Bayesian
//! network over tabular records with a text classifier over note embeddings.
//!
//! The two sources are combined through virtual evidence, through a learned
//! consistency node, or both. The crate also covers parameter learning, the
//! neural text classifier, evaluation metrics and dataset handling.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod inference;
pub mod learning;
pub mod model;
pub mod profile;
pub mod seed;
pub mod text;

pub use error::{Error, Result};
