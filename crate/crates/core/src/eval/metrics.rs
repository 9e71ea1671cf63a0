use crate::deep::DeepCorrNet;
use crate::error::{dim_err, Error, Result};
use crate::model::{CorrNetParams, TwoViewBatch, TwoViewEncoder, ViewTag};
use crate::numerics::{pearson, DenseMatrix};

/// Sum over columns of the Pearson correlation between matching columns.
pub fn sum_correlation(hx: &DenseMatrix, hy: &DenseMatrix) -> Result<f64> {
    if hx.shape() != hy.shape() {
        return dim_err(
            "sum_correlation",
            format!("{:?} vs {:?}", hx.shape(), hy.shape()),
        );
    }
    if hx.rows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "sum_correlation needs n >= 2, got {}",
            hx.rows()
        )));
    }
    let (tx, ty) = (hx.transpose(), hy.transpose());
    (0..tx.rows()).map(|j| pearson(tx.row(j), ty.row(j))).sum()
}

/// Per-column correlations, in column order.
pub fn column_correlations(hx: &DenseMatrix, hy: &DenseMatrix) -> Result<Vec<f64>> {
    sum_correlation(hx, hy)?;
    let (tx, ty) = (hx.transpose(), hy.transpose());
    (0..tx.rows())
        .map(|j| pearson(tx.row(j), ty.row(j)))
        .collect()
}

/// Encoders that can also decode a code back into both views.
pub trait Autoencoder: TwoViewEncoder {
    fn decode_code(&self, h: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)>;
}

impl Autoencoder for CorrNetParams {
    fn decode_code(&self, h: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        self.decode(h)
    }
}

impl Autoencoder for DeepCorrNet {
    fn decode_code(&self, h: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        self.decode(h)
    }
}

fn mean_sq_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let n = a.as_slice().len().max(1) as f64;
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / n
}

/// `(self, cross)` mean squared error per element with the x view as input:
/// x reconstructed from `h(x)`, and y reconstructed from `h(x)`.
pub fn reconstruction_mse(model: &impl Autoencoder, batch: &TwoViewBatch) -> Result<(f64, f64)> {
    if batch.y.cols() != model.view_dim(ViewTag::Y) {
        return dim_err(
            "reconstruction_mse",
            format!(
                "y has {} columns, model expects {}",
                batch.y.cols(),
                model.view_dim(ViewTag::Y)
            ),
        );
    }
    let h = model.encode_view(ViewTag::X, &batch.x)?;
    let (xr, yr) = model.decode_code(&h)?;
    Ok((mean_sq_diff(&xr, &batch.x), mean_sq_diff(&yr, &batch.y)))
}

/// Views reconstructed from one view's code: `(x_hat, y_hat)`.
pub fn reconstruct_from(
    model: &impl Autoencoder,
    view: ViewTag,
    data: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    model.decode_code(&model.encode_view(view, data)?)
}

/// Precision, recall and F1. Precision is 0 when nothing is predicted
/// positive, recall is 0 when nothing is truly positive, F1 is 0 when both are.
pub fn f1(predictions: &[bool], truth: &[bool]) -> Result<(f64, f64, f64)> {
    if predictions.len() != truth.len() {
        return dim_err(
            "f1",
            format!(
                "{} predictions vs {} labels",
                predictions.len(),
                truth.len()
            ),
        );
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(prf(tp, fp, fn_))
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f)
}

/// A decision threshold and the scores it achieves on the tuning data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scans the midpoints between consecutive distinct scores (a pair is
/// predicted positive when its score is strictly above the threshold) and
/// returns the one with the highest F1; ties go to higher precision, then to
/// the lower threshold.
pub fn tune_threshold(scores: &[(f64, bool)]) -> Result<Threshold> {
    if scores.iter().any(|s| !s.0.is_finite()) {
        return Err(Error::NonFinite("tune_threshold scores".into()));
    }
    let positives = scores.iter().filter(|s| s.1).count();
    if positives == 0 || positives == scores.len() {
        return Err(Error::InvalidArgument(
            "threshold tuning needs both positive and negative examples".into(),
        ));
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    // Walk thresholds from high to low; everything before index i is predicted positive.
    let mut best: Option<Threshold> = None;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if i == sorted.len() {
            break;
        }
        let t = 0.5 * (v + sorted[i].0);
        let (p, r, f) = prf(tp, fp, positives - tp);
        let cand = Threshold {
            threshold: t,
            precision: p,
            recall: r,
            f1: f,
        };
        best = Some(match best {
            None => cand,
            Some(b) if f > b.f1 || (f == b.f1 && p >= b.precision) => cand,
            Some(b) => b,
        });
    }
    best.ok_or_else(|| {
        Error::InvalidArgument("all scores are equal; no threshold separates them".into())
    })
}

/// Pearson correlation across the code coordinates of each `(x_i, y_i)` pair.
pub fn correlation_scores(
    model: &impl TwoViewEncoder,
    x: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<Vec<f64>> {
    if model.code_dim() < 2 {
        return Err(Error::InvalidArgument(
            "matching by correlation needs a code of width >= 2".into(),
        ));
    }
    if x.rows() != y.rows() {
        return dim_err(
            "correlation_scores",
            format!("{} x-rows vs {} y-rows", x.rows(), y.rows()),
        );
    }
    let hx = model.encode_view(ViewTag::X, x)?;
    let hy = model.encode_view(ViewTag::Y, y)?;
    (0..hx.rows())
        .map(|i| pearson(hx.row(i), hy.row(i)))
        .collect()
}

/// Marks each pair whose code correlation exceeds `threshold`.
pub fn match_by_correlation(
    model: &impl TwoViewEncoder,
    x: &DenseMatrix,
    y: &DenseMatrix,
    threshold: f64,
) -> Result<Vec<bool>> {
    Ok(correlation_scores(model, x, y)?
        .into_iter()
        .map(|s| s > threshold)
        .collect())
}
