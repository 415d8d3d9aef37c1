//! Learned bilinear extensions of cosine similarity.
//!
//! The similarity of two word vectors `a`, `b` under a factor `B` is the
//! cosine of `Ba` and `Bb`, i.e. the cosine taken under the metric `BᵀB`.
//! `B` is fitted to human similarity judgments with full-batch Adam on a
//! mean squared error, using k-fold cross-validation with early stopping,
//! and scored by fold-averaged Pearson and Spearman correlation against the
//! identity (standard cosine) baseline.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod metric;
pub mod training;

pub use error::{Error, Result};
