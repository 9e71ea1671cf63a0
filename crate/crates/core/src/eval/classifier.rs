use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{dim_err, Error, Result};
use crate::numerics::{matmul_nt, matmul_tn, DenseMatrix, DenseVector};

/// Stopping rule and penalty for [`fit_classifier_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the full gradient's Euclidean norm is at most this.
    pub grad_tol: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 500,
            grad_tol: 1e-4,
        }
    }
}

/// Multinomial logistic regression.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    /// `classes x k`
    pub weights: DenseMatrix,
    pub bias: DenseVector,
    pub l2: f64,
    pub iterations: usize,
    pub final_loss: f64,
}

impl LinearClassifier {
    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn scores(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        if h.cols() != self.weights.cols() {
            return dim_err(
                "classifier",
                format!(
                    "features have {} columns, classifier expects {}",
                    h.cols(),
                    self.weights.cols()
                ),
            );
        }
        let mut s = matmul_nt(h, &self.weights)?;
        s.add_row_vector(self.bias.as_slice())?;
        Ok(s)
    }

    /// Arg-max class per row (lowest index on ties).
    pub fn predict(&self, h: &DenseMatrix) -> Result<Vec<usize>> {
        let s = self.scores(h)?;
        Ok(s.row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold(0, |best, (i, &v)| if v > r[best] { i } else { best })
            })
            .collect())
    }

    /// Percentage of rows predicted correctly.
    pub fn accuracy(&self, h: &DenseMatrix, labels: &[usize]) -> Result<f64> {
        if h.rows() != labels.len() {
            return dim_err(
                "accuracy",
                format!("{} rows vs {} labels", h.rows(), labels.len()),
            );
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("accuracy of an empty set".into()));
        }
        let hits = self
            .predict(h)?
            .iter()
            .zip(labels)
            .filter(|(p, t)| p == t)
            .count();
        Ok(100.0 * hits as f64 / labels.len() as f64)
    }
}

/// Mean cross-entropy plus `l2/2 * |W|^2` and its gradient (bias unpenalized).
/// `theta` is `classes x (k+1)` with the bias in the last column.
fn objective(
    xa: &DenseMatrix,
    y: &[usize],
    theta: &DenseMatrix,
    l2: f64,
    want_grad: bool,
) -> (f64, Option<DenseMatrix>) {
    let n = xa.rows() as f64;
    let k = theta.cols() - 1;
    let mut s = matmul_nt(xa, theta).expect("shapes");
    let mut loss = 0.0;
    for (i, &t) in y.iter().enumerate() {
        let row = s.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        loss += m + z.ln() - row[t];
        for v in row.iter_mut() {
            *v = (*v - m).exp() / z;
        }
        row[t] -= 1.0;
    }
    loss /= n;
    let w2: f64 = theta
        .row_iter()
        .map(|r| r[..k].iter().map(|v| v * v).sum::<f64>())
        .sum();
    loss += 0.5 * l2 * w2;
    if !want_grad {
        return (loss, None);
    }
    let mut g = matmul_tn(&s, xa).expect("shapes");
    g.scale(1.0 / n);
    for c in 0..theta.rows() {
        for j in 0..k {
            g.set(c, j, g.get(c, j) + l2 * theta.get(c, j));
        }
    }
    (loss, Some(g))
}

/// Fits with the default stopping rule and the given penalty.
pub fn fit_classifier(h: &DenseMatrix, labels: &[usize], l2: f64) -> Result<LinearClassifier> {
    fit_classifier_with(
        h,
        labels,
        &ClassifierConfig {
            l2,
            ..Default::default()
        },
        None,
    )
}

/// Nesterov-accelerated full-batch gradient descent with step `1/L`, where
/// `L = λmax(X̃ᵀX̃/n)/2 + l2` bounds the objective's curvature (`X̃` is the
/// features with a ones column). Starts from zero unless `init` is given.
pub fn fit_classifier_with(
    h: &DenseMatrix,
    labels: &[usize],
    cfg: &ClassifierConfig,
    init: Option<&LinearClassifier>,
) -> Result<LinearClassifier> {
    let (n, k) = h.shape();
    if labels.len() != n {
        return dim_err(
            "fit_classifier",
            format!("{n} rows vs {} labels", labels.len()),
        );
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    if !(cfg.l2.is_finite() && cfg.l2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "l2 must be finite and >= 0, got {}",
            cfg.l2
        )));
    }
    if !h.is_finite() {
        return Err(Error::NonFinite("classifier features".into()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::InvalidArgument(
            "classifier needs at least two distinct classes".into(),
        ));
    }
    let ones = DenseMatrix::filled(n, 1, 1.0);
    let xa = h.hstack(&ones)?;
    let gram = matmul_tn(&xa, &xa)?;
    let lmax = SymmetricEigen::new(DMatrix::from_row_slice(k + 1, k + 1, gram.as_slice()))
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    let lipschitz = 0.5 * lmax / n as f64 + cfg.l2;
    let step = 1.0 / lipschitz.max(1e-12);

    let mut theta = match init {
        Some(c) if c.weights.shape() == (classes, k) => {
            let b = DenseMatrix::from_vec(classes, 1, c.bias.as_slice().to_vec())?;
            c.weights.hstack(&b)?
        }
        Some(_) => return dim_err("fit_classifier", "initial classifier has the wrong shape"),
        None => DenseMatrix::zeros(classes, k + 1),
    };
    let mut prev = theta.clone();
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        // The stopping test costs a full gradient, so it runs every few steps.
        if it % 5 == 0 {
            let (_, g) = objective(&xa, labels, &theta, cfg.l2, true);
            if g.expect("requested").frobenius_norm() <= cfg.grad_tol {
                break;
            }
        }
        // Look-ahead point y = θ + (t-1)/(t+2) (θ - θ_prev), then a gradient step from it.
        let beta = it as f64 / (it as f64 + 3.0);
        let mut look = theta.clone();
        look.scale(1.0 + beta);
        look.axpy(-beta, &prev)?;
        let (_, gl) = objective(&xa, labels, &look, cfg.l2, true);
        look.axpy(-step, &gl.expect("requested"))?;
        prev = std::mem::replace(&mut theta, look);
        iterations = it + 1;
    }
    let (final_loss, _) = objective(&xa, labels, &theta, cfg.l2, false);
    if !final_loss.is_finite() {
        return Err(Error::NonFinite("classifier loss".into()));
    }
    let weights = theta.slice_cols(0, k);
    let bias = DenseVector::from_vec(theta.column(k).into_vec())?;
    Ok(LinearClassifier {
        weights,
        bias,
        l2: cfg.l2,
        iterations,
        final_loss,
    })
}
