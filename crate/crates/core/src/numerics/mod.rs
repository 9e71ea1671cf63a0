//! Dense linear algebra, activations, random numbers and correlation statistics.

mod activation;
mod matrix;
mod rng;
mod stats;

pub use activation::{activation, sigmoid, Activation};
pub(crate) use matrix::accumulate_tn;
pub use matrix::{matmul, matmul_nt, matmul_tn, DenseMatrix, DenseVector};
pub use rng::{derive_seed, Rng};
pub use stats::{average_ranks, pearson, spearman};

/// Stabilizer added under the square root of every differentiated correlation denominator.
pub const CORR_EPS: f64 = 1e-8;
