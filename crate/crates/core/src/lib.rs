//! Correlational neural networks for two-view common representation learning.
//!
//! A [`CorrNetParams`] autoencoder learns a shared hidden code for two views by
//! jointly minimizing self/cross reconstruction error and maximizing the
//! correlation between the views' codes. The crate also provides linear CCA,
//! a multimodal-autoencoder training schedule, deep stacking, and the
//! evaluation protocols used to compare them.

pub mod baselines;
pub mod checkpoint;
pub mod datasets;
pub mod deep;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use model::{
    CorrNetParams, LossBreakdown, LossTermMask, ReconLoss, Term, TwoViewBatch, ViewTag,
};
pub use numerics::{Activation, DenseMatrix, DenseVector, Rng};
