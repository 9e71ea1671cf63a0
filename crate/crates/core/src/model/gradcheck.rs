//! Central finite-difference verification of the analytic gradient.

use crate::error::Result;
use crate::numerics::{Activation, Rng};

use super::objective::{loss, loss_and_grad, LossTermMask, Term, TwoViewBatch};
use super::params::{CorrNetParams, ReconLoss};

const BLOCK_NAMES: [&str; 6] = ["W", "V", "b", "W'", "V'", "b'"];

/// Outcome of comparing every gradient entry against finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub entries: usize,
    pub failures: Vec<GradMismatch>,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub block: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tolerances: an entry passes when its relative error is within `rel_tol`
/// or its absolute error is within `abs_tol` (for entries near zero).
#[derive(Clone, Copy, Debug)]
pub struct GradCheckTolerance {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradCheckTolerance {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-6,
            abs_tol: 1e-8,
        }
    }
}

/// Compares `grad` against central differences of `loss().total` for every parameter.
pub fn check_gradient(
    p: &CorrNetParams,
    batch: &TwoViewBatch,
    mask: &LossTermMask,
    tol: GradCheckTolerance,
) -> Result<GradCheckReport> {
    let (_, g) = loss_and_grad(p, batch, mask)?;
    let analytic = g.blocks().map(|b| b.to_vec());
    let mut work = p.clone();
    let mut failures = Vec::new();
    let mut entries = 0;
    let mut max_rel_err: f64 = 0.0;
    for (bi, block) in analytic.iter().enumerate() {
        for (i, &a) in block.iter().enumerate() {
            let orig = work.blocks()[bi][i];
            work.blocks_mut()[bi][i] = orig + tol.step;
            let up = loss(&work, batch, mask)?.total;
            work.blocks_mut()[bi][i] = orig - tol.step;
            let down = loss(&work, batch, mask)?.total;
            work.blocks_mut()[bi][i] = orig;
            let numeric = (up - down) / (2.0 * tol.step);
            let abs_err = (a - numeric).abs();
            let rel_err = abs_err / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            entries += 1;
            if abs_err > tol.abs_tol {
                max_rel_err = max_rel_err.max(rel_err);
                if rel_err > tol.rel_tol {
                    failures.push(GradMismatch {
                        block: BLOCK_NAMES[bi],
                        index: i,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(GradCheckReport {
        entries,
        failures,
        max_rel_err,
    })
}

/// One randomly drawn gradient-check problem.
#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub params: CorrNetParams,
    pub batch: TwoViewBatch,
    pub description: String,
}

/// Draws a small random model and batch: `d1, d2 in 3..=8`, `k in 2..=6`, `n in 2..=10`.
///
/// Cross-entropy cases use binary targets and a sigmoid output, squared-loss
/// cases use Gaussian inputs.
pub fn random_case(rng: &mut Rng, hidden_act: Activation, recon_loss: ReconLoss) -> GradCheckCase {
    let d1 = 3 + rng.below(6);
    let d2 = 3 + rng.below(6);
    let k = 2 + rng.below(5);
    let n = 2 + rng.below(9);
    let output_act = match recon_loss {
        ReconLoss::CrossEntropy => Activation::Sigmoid,
        ReconLoss::Squared => {
            [Activation::Identity, Activation::Sigmoid, Activation::Tanh][rng.below(3)]
        }
    };
    let mut params =
        CorrNetParams::new(d1, d2, k, hidden_act, output_act, recon_loss, rng).expect("valid dims");
    // weights stay at their initialization scale; nonzero biases exercise the bias paths
    for v in params
        .enc_bias
        .as_mut_slice()
        .iter_mut()
        .chain(params.dec_bias.as_mut_slice())
    {
        *v = 0.1 * rng.normal();
    }
    let draw = |rng: &mut Rng, cols: usize| match recon_loss {
        ReconLoss::CrossEntropy => crate::numerics::DenseMatrix::from_fn(n, cols, |_, _| {
            if rng.bernoulli(0.5) {
                1.0
            } else {
                0.0
            }
        }),
        ReconLoss::Squared => rng.normal_matrix(n, cols),
    };
    let x = draw(rng, d1);
    let y = draw(rng, d2);
    let batch = TwoViewBatch::new(x, y).expect("equal rows");
    let description =
        format!("d1={d1} d2={d2} k={k} n={n} f={hidden_act} g={output_act} loss={recon_loss}");
    GradCheckCase {
        params,
        batch,
        description,
    }
}

/// The masks covered by the standard check: each single term, then the full objective.
pub fn standard_masks(lambda: f64) -> Vec<LossTermMask> {
    let mut masks: Vec<LossTermMask> = Term::ALL
        .iter()
        .map(|&t| LossTermMask::single(t, lambda).expect("valid"))
        .collect();
    masks.push(LossTermMask::corrnet(lambda));
    masks
}
