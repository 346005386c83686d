//! Containment-relation classification with a jointly trained skip-gram objective.
//!
//! An LSTM relation classifier reads candidate entity pairs (with position
//! indicators and position features) and decides whether the first argument
//! temporally contains the second. Its token-embedding table is shared with a
//! skip-gram context predictor, so unlabeled text keeps shaping the embeddings
//! while the classifier trains.
//!
//! The crate is organised as a pipeline:
//!
//! - [`corpus`]: documents, preprocessing, vocabulary, skip-gram pairs, synthetic data
//! - [`candidates`]: candidate pair generation and classifier input construction
//! - [`neural`]: explicit-gradient tensors, LSTM, softmax, dropout, Adam, gradient checks
//! - [`models`]: the relation classifier, the skip-gram model and the combined loss
//! - [`trainer`]: the five training settings, early stopping and sweeps
//! - [`eval`]: precision/recall/F under temporal closure
//! - [`cli`]: the command-line front end

pub mod candidates;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod models;
pub mod neural;
pub mod trainer;

pub use error::{Error, Result};

/// Floating point type used for all parameters and activations.
#[cfg(not(feature = "f32"))]
pub type Real = f64;

/// Floating point type used for all parameters and activations.
#[cfg(feature = "f32")]
pub type Real = f32;
