//! Comparison points: closed-form linear CCA and the multimodal autoencoder schedule.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::checkpoint::{ContainerKind, Reader, Writer};
use crate::error::{dim_err, Error, Result};
use crate::model::{TwoViewEncoder, ViewTag};
use crate::numerics::{matmul, matmul_tn, DenseMatrix, DenseVector};

pub use crate::training::{mae_schedule, train_mae, train_mae_dataset};

/// Default ridge for image views whose borders are constant.
pub const DEFAULT_RIDGE: f64 = 1e-4;

/// Eigenvalues of a regularized covariance at or below this are treated as singular.
pub const EIGEN_TOL: f64 = 1e-10;

/// Fitted canonical correlation analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct CcaModel {
    pub mean_x: DenseVector,
    pub mean_y: DenseVector,
    /// `d1 x k`
    pub proj_x: DenseMatrix,
    /// `d2 x k`
    pub proj_y: DenseMatrix,
    /// Descending, each in `[0, 1]`.
    pub correlations: DenseVector,
    pub ridge: f64,
}

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

fn centered(m: &DenseMatrix, mean: &DenseVector) -> DenseMatrix {
    let mut c = m.clone();
    let neg: Vec<f64> = mean.as_slice().iter().map(|v| -v).collect();
    c.add_row_vector(&neg).expect("mean matches columns");
    c
}

/// `C^{-1/2}` for a symmetric positive definite `C`.
fn inverse_sqrt(c: DMatrix<f64>, view: &'static str) -> Result<DMatrix<f64>> {
    let c = (&c + c.transpose()) * 0.5;
    let e = SymmetricEigen::new(c);
    let min_eig = e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_eig > EIGEN_TOL) {
        return Err(Error::SingularCovariance { view, min_eig });
    }
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(&e.eigenvectors * d * e.eigenvectors.transpose())
}

/// Fits `k` canonical pairs on centered data with ridge-regularized covariances,
/// by whitening each view and taking the SVD of the whitened cross-covariance.
pub fn fit_cca(x: &DenseMatrix, y: &DenseMatrix, k: usize, ridge: f64) -> Result<CcaModel> {
    let (n, d1, d2) = (x.rows(), x.cols(), y.cols());
    if y.rows() != n {
        return dim_err("fit_cca", format!("{n} x-rows vs {} y-rows", y.rows()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "CCA needs at least 2 rows, got {n}"
        )));
    }
    if k == 0 || k > d1.min(d2) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={}",
            d1.min(d2)
        )));
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge must be finite and >= 0, got {ridge}"
        )));
    }
    let mean_x = x.column_means();
    let mean_y = y.column_means();
    let xc = centered(x, &mean_x);
    let yc = centered(y, &mean_y);
    let scale = 1.0 / (n as f64 - 1.0);
    let cov = |a: &DenseMatrix, b: &DenseMatrix| {
        let mut c = to_na(&matmul_tn(a, b).expect("row counts agree"));
        c *= scale;
        c
    };
    let cxx = cov(&xc, &xc) + DMatrix::identity(d1, d1) * ridge;
    let cyy = cov(&yc, &yc) + DMatrix::identity(d2, d2) * ridge;
    let cxy = cov(&xc, &yc);
    let wx = inverse_sqrt(cxx, "x")?;
    let wy = inverse_sqrt(cyy, "y")?;
    let t = &wx * cxy * &wy;
    let svd = t.svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    // Stable sort: equal singular values keep their input order.
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut px = DMatrix::zeros(d1, k);
    let mut py = DMatrix::zeros(d2, k);
    let mut corr = Vec::with_capacity(k);
    for (j, &i) in order.iter().take(k).enumerate() {
        let a = &wx * u.column(i);
        let b = &wy * vt.row(i).transpose();
        let peak = a
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if peak < 0.0 { -1.0 } else { 1.0 };
        px.set_column(j, &(a * sign));
        py.set_column(j, &(b * sign));
        corr.push(svd.singular_values[i].clamp(0.0, 1.0));
    }
    Ok(CcaModel {
        mean_x,
        mean_y,
        proj_x: from_na(&px),
        proj_y: from_na(&py),
        correlations: DenseVector::from_vec(corr)?,
        ridge,
    })
}

impl CcaModel {
    pub fn k(&self) -> usize {
        self.correlations.len()
    }

    /// `(data - mean) * proj` for the chosen view.
    pub fn project(&self, view: ViewTag, data: &DenseMatrix) -> Result<DenseMatrix> {
        let (mean, proj) = match view {
            ViewTag::X => (&self.mean_x, &self.proj_x),
            ViewTag::Y => (&self.mean_y, &self.proj_y),
        };
        if data.cols() != mean.len() {
            return dim_err(
                "cca project",
                format!(
                    "{view} data has {} columns, model expects {}",
                    data.cols(),
                    mean.len()
                ),
            );
        }
        matmul(&centered(data, mean), proj)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ContainerKind::Cca);
        w.usize(self.k());
        w.usize(self.mean_x.len());
        w.usize(self.mean_y.len());
        w.f64s(&[self.ridge]);
        w.f64s(self.mean_x.as_slice());
        w.f64s(self.mean_y.as_slice());
        w.f64s(self.proj_x.as_slice());
        w.f64s(self.proj_y.as_slice());
        w.f64s(self.correlations.as_slice());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, ContainerKind::Cca)?;
        let k = r.usize()?;
        let d1 = r.usize()?;
        let d2 = r.usize()?;
        let ridge = r.f64s(1)?[0];
        let m = CcaModel {
            ridge,
            mean_x: r.vector(d1)?,
            mean_y: r.vector(d2)?,
            proj_x: r.matrix(d1, k)?,
            proj_y: r.matrix(d2, k)?,
            correlations: r.vector(k)?,
        };
        r.finish()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl TwoViewEncoder for CcaModel {
    fn code_dim(&self) -> usize {
        self.k()
    }

    fn view_dim(&self, view: ViewTag) -> usize {
        match view {
            ViewTag::X => self.mean_x.len(),
            ViewTag::Y => self.mean_y.len(),
        }
    }

    fn encode_view(&self, view: ViewTag, data: &DenseMatrix) -> Result<DenseMatrix> {
        self.project(view, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::synth_shared_latent;
    use crate::numerics::{pearson, Rng};

    #[test]
    fn identical_views_are_perfectly_correlated() {
        let x = Rng::seed_from(1).normal_matrix(200, 4);
        let m = fit_cca(&x, &x, 4, 0.0).unwrap();
        for &c in m.correlations.as_slice() {
            assert!((c - 1.0).abs() < 1e-9, "{:?}", m.correlations);
        }
    }

    #[test]
    fn independent_views_are_nearly_uncorrelated() {
        let mut rng = Rng::seed_from(2);
        let x = rng.normal_matrix(10_000, 5);
        let y = rng.normal_matrix(10_000, 5);
        let m = fit_cca(&x, &y, 5, 0.0).unwrap();
        assert!(m.correlations[0] <= 0.1, "{:?}", m.correlations);
    }

    #[test]
    fn recovers_generating_correlations() {
        let (d, truth) = synth_shared_latent(10_000, 5, 5, 3, 1.0, 5).unwrap();
        let m = fit_cca(&d.x, &d.y, 3, 0.0).unwrap();
        for (a, b) in m.correlations.as_slice().iter().zip(&truth) {
            assert!((a - b).abs() <= 0.02, "{:?} vs {truth:?}", m.correlations);
        }
    }

    #[test]
    fn training_projections_are_whitened_and_paired() {
        let (d, _) = synth_shared_latent(2000, 6, 5, 3, 0.7, 9).unwrap();
        let m = fit_cca(&d.x, &d.y, 4, 0.0).unwrap();
        let hx = m.project(ViewTag::X, &d.x).unwrap();
        let hy = m.project(ViewTag::Y, &d.y).unwrap();
        let n = hx.rows() as f64;
        let cov = matmul_tn(&hx, &hx).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((cov.get(i, j) / (n - 1.0) - want).abs() < 1e-9);
            }
            let r = pearson(hx.column(i).as_slice(), hy.column(i).as_slice()).unwrap();
            assert!((r - m.correlations[i]).abs() < 1e-9);
        }
        assert!(m.correlations.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn affine_invariance() {
        let (d, _) = synth_shared_latent(3000, 5, 5, 3, 0.8, 13).unwrap();
        let base = fit_cca(&d.x, &d.y, 5, 0.0).unwrap();
        let mut rng = Rng::seed_from(14);
        let mut a = rng.normal_matrix(5, 5);
        for i in 0..5 {
            a.set(i, i, a.get(i, i) + 3.0);
        }
        let mut xt = matmul(&d.x, &a).unwrap();
        xt.add_row_vector(&[1.0, -2.0, 3.0, 0.5, 7.0]).unwrap();
        let moved = fit_cca(&xt, &d.y, 5, 0.0).unwrap();
        assert!(base
            .correlations
            .as_slice()
            .iter()
            .zip(moved.correlations.as_slice())
            .all(|(p, q)| (p - q).abs() < 1e-6));
    }

    #[test]
    fn projection_matches_loop_oracle() {
        let mut rng = Rng::seed_from(3);
        let x = rng.normal_matrix(40, 4);
        let y = rng.normal_matrix(40, 3);
        let m = fit_cca(&x, &y, 2, 1e-3).unwrap();
        let probe = rng.normal_matrix(7, 4);
        let got = m.project(ViewTag::X, &probe).unwrap();
        for i in 0..7 {
            for j in 0..2 {
                let want: f64 = (0..4)
                    .map(|c| (probe.get(i, c) - m.mean_x[c]) * m.proj_x.get(c, j))
                    .sum();
                assert!((got.get(i, j) - want).abs() < 1e-12);
            }
        }
        let constant = DenseMatrix::filled(2, 4, 3.0);
        assert!(m.project(ViewTag::X, &constant).unwrap().is_finite());
        assert!(m.project(ViewTag::Y, &probe).is_err());
    }

    #[test]
    fn errors() {
        let x = Rng::seed_from(4).normal_matrix(30, 3);
        let mut z = x.clone();
        for r in 0..30 {
            z.set(r, 2, 0.0);
        }
        assert!(matches!(
            fit_cca(&z, &x, 2, 0.0),
            Err(Error::SingularCovariance { view: "x", .. })
        ));
        assert!(fit_cca(&z, &x, 2, 1e-4).is_ok());
        assert!(fit_cca(&x, &x, 4, 0.0).is_err());
        assert!(fit_cca(&x, &x.slice_rows(0, 10), 2, 0.0).is_err());
        assert!(fit_cca(&x, &x, 2, -1.0).is_err());
    }

    #[test]
    fn container_round_trip() {
        let mut rng = Rng::seed_from(6);
        let x = rng.normal_matrix(30, 4);
        let y = rng.normal_matrix(30, 3);
        let m = fit_cca(&x, &y, 3, 1e-4).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(CcaModel::from_bytes(&bytes).unwrap(), m);
        assert!(crate::checkpoint::corrnet_from_bytes(&bytes).is_err());
    }
}
