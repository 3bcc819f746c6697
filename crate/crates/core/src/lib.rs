//! Conditional masked prediction of trailer shot sequences.
//!
//! A small transformer encoder reads a movie's shot features followed by a
//! partially masked trailer and predicts the masked trailer rows; each
//! prediction is scored against every movie shot by cosine similarity.
//! Training draws the mask ratio from a self-paced scheduler driven by the
//! model's own batch accuracy, and generation fills the trailer iteratively,
//! re-masking low-confidence positions so they can be revised.
//!
//! Module map:
//! - [`corpus`]: shot matrices, ground-truth labels, synthetic pairs, file formats
//! - [`autograd`]: reverse-mode differentiation over dense matrices
//! - [`encoder`]: the transformer encoder and its checkpoint format
//! - [`trainer`]: masking, probabilities, losses, AdamW and the training loop
//! - [`schedule`]: mask-ratio schedulers
//! - [`decode`]: self-corrective and greedy generation
//! - [`metrics`]: selection and ordering metrics
//! - [`align`]: narration-to-shot alignment and segment counting

pub mod align;
pub mod autograd;
pub mod corpus;
pub mod decode;
pub mod encoder;
mod error;
pub mod matrix;
pub mod metrics;
pub mod rng;
pub mod schedule;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
