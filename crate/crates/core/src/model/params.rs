use std::fmt;
use std::str::FromStr;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{matmul_nt, Activation, DenseMatrix, DenseVector, Rng};

/// Reconstruction error measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReconLoss {
    /// Summed squared error.
    Squared,
    /// Summed binary cross-entropy; requires a sigmoid output layer and targets in `[0, 1]`.
    CrossEntropy,
}

impl ReconLoss {
    pub fn id(self) -> u32 {
        match self {
            ReconLoss::Squared => 0,
            ReconLoss::CrossEntropy => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(ReconLoss::Squared),
            1 => Some(ReconLoss::CrossEntropy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReconLoss::Squared => "squared",
            ReconLoss::CrossEntropy => "cross_entropy",
        }
    }
}

impl fmt::Display for ReconLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReconLoss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "squared" | "mse" | "squared_error" => Ok(ReconLoss::Squared),
            "cross_entropy" | "crossentropy" | "ce" => Ok(ReconLoss::CrossEntropy),
            other => Err(Error::InvalidArgument(format!(
                "unknown reconstruction loss `{other}`"
            ))),
        }
    }
}

/// Glorot-style uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    rng.uniform_matrix(rows, cols, -r, r)
}

/// One affine layer followed by an activation: `act(input * weight^T + bias)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weight: DenseMatrix,
    pub bias: DenseVector,
    pub act: Activation,
}

impl Layer {
    pub fn new(weight: DenseMatrix, bias: DenseVector, act: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return dim_err(
                "Layer::new",
                format!("bias {} for {} outputs", bias.len(), weight.rows()),
            );
        }
        Ok(Self { weight, bias, act })
    }

    pub fn random(input: usize, output: usize, act: Activation, rng: &mut Rng) -> Self {
        Self {
            weight: glorot_uniform(output, input, rng),
            bias: DenseVector::zeros(output),
            act,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, input: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = matmul_nt(input, &self.weight)?;
        out.add_row_vector(self.bias.as_slice())?;
        self.act.apply_inplace(&mut out);
        Ok(out)
    }
}

/// Parameters of a two-view correlational autoencoder.
///
/// The hidden code of a pair is `f(W x + V y + b)`; single-view codes zero the
/// missing view. Decoding maps a code `h` to `g(W' h + b'[..d1])` and
/// `g(V' h + b'[d1..])`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrNetParams {
    /// `k x d1`, x-view encoder weights (W).
    pub enc_x: DenseMatrix,
    /// `k x d2`, y-view encoder weights (V).
    pub enc_y: DenseMatrix,
    /// `k`, shared hidden bias (b).
    pub enc_bias: DenseVector,
    /// `d1 x k`, x-view decoder weights (W').
    pub dec_x: DenseMatrix,
    /// `d2 x k`, y-view decoder weights (V').
    pub dec_y: DenseMatrix,
    /// `d1 + d2`, output bias (b'); the first `d1` entries belong to the x view.
    pub dec_bias: DenseVector,
    pub hidden_act: Activation,
    pub output_act: Activation,
    pub recon_loss: ReconLoss,
}

impl CorrNetParams {
    /// Random weights, zero biases.
    pub fn new(
        d1: usize,
        d2: usize,
        k: usize,
        hidden_act: Activation,
        output_act: Activation,
        recon_loss: ReconLoss,
        rng: &mut Rng,
    ) -> Result<Self> {
        if d1 == 0 || d2 == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive (d1={d1}, d2={d2}, k={k})"
            )));
        }
        let p = Self {
            enc_x: glorot_uniform(k, d1, rng),
            enc_y: glorot_uniform(k, d2, rng),
            enc_bias: DenseVector::zeros(k),
            dec_x: glorot_uniform(d1, k, rng),
            dec_y: glorot_uniform(d2, k, rng),
            dec_bias: DenseVector::zeros(d1 + d2),
            hidden_act,
            output_act,
            recon_loss,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(
        d1: usize,
        d2: usize,
        k: usize,
        hidden_act: Activation,
        output_act: Activation,
        recon_loss: ReconLoss,
    ) -> Self {
        Self {
            enc_x: DenseMatrix::zeros(k, d1),
            enc_y: DenseMatrix::zeros(k, d2),
            enc_bias: DenseVector::zeros(k),
            dec_x: DenseMatrix::zeros(d1, k),
            dec_y: DenseMatrix::zeros(d2, k),
            dec_bias: DenseVector::zeros(d1 + d2),
            hidden_act,
            output_act,
            recon_loss,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.enc_x.rows()
    }

    pub fn x_dim(&self) -> usize {
        self.enc_x.cols()
    }

    pub fn y_dim(&self) -> usize {
        self.enc_y.cols()
    }

    /// Checks mutual consistency of all shapes and finiteness of all entries.
    pub fn validate(&self) -> Result<()> {
        let (k, d1, d2) = (self.hidden_dim(), self.x_dim(), self.y_dim());
        if k == 0 || d1 == 0 || d2 == 0 {
            return Err(Error::InvalidArgument(
                "CorrNet dimensions must be positive".into(),
            ));
        }
        let checks = [
            ("enc_y", self.enc_y.shape(), (k, d2)),
            ("dec_x", self.dec_x.shape(), (d1, k)),
            ("dec_y", self.dec_y.shape(), (d2, k)),
            ("enc_bias", (self.enc_bias.len(), 1), (k, 1)),
            ("dec_bias", (self.dec_bias.len(), 1), (d1 + d2, 1)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return dim_err(
                    "CorrNetParams",
                    format!("{name} has shape {got:?}, expected {want:?}"),
                );
            }
        }
        if self.recon_loss == ReconLoss::CrossEntropy && self.output_act != Activation::Sigmoid {
            return Err(Error::InvalidArgument(
                "cross-entropy reconstruction requires a sigmoid output activation".into(),
            ));
        }
        let finite = [&self.enc_x, &self.enc_y, &self.dec_x, &self.dec_y]
            .iter()
            .all(|m| m.is_finite())
            && self
                .enc_bias
                .as_slice()
                .iter()
                .chain(self.dec_bias.as_slice())
                .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("CorrNet parameters".into()));
        }
        Ok(())
    }

    fn check_cols(&self, op: &'static str, m: &DenseMatrix, want: usize) -> Result<()> {
        if m.cols() != want {
            return dim_err(
                op,
                format!("input has {} columns, model expects {want}", m.cols()),
            );
        }
        Ok(())
    }

    /// `f(W x_i + V y_i + b)` for every row pair.
    pub fn encode_both(&self, x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_cols("encode_both", x, self.x_dim())?;
        self.check_cols("encode_both", y, self.y_dim())?;
        if x.rows() != y.rows() {
            return dim_err(
                "encode_both",
                format!("{} x-rows vs {} y-rows", x.rows(), y.rows()),
            );
        }
        let mut a = matmul_nt(x, &self.enc_x)?;
        a.axpy(1.0, &matmul_nt(y, &self.enc_y)?)?;
        a.add_row_vector(self.enc_bias.as_slice())?;
        self.hidden_act.apply_inplace(&mut a);
        Ok(a)
    }

    /// `f(W x_i + b)`: the representation with the y view zeroed.
    pub fn encode_x(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_cols("encode_x", x, self.x_dim())?;
        let mut a = matmul_nt(x, &self.enc_x)?;
        a.add_row_vector(self.enc_bias.as_slice())?;
        self.hidden_act.apply_inplace(&mut a);
        Ok(a)
    }

    /// `f(V y_i + b)`: the representation with the x view zeroed.
    pub fn encode_y(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_cols("encode_y", y, self.y_dim())?;
        let mut a = matmul_nt(y, &self.enc_y)?;
        a.add_row_vector(self.enc_bias.as_slice())?;
        self.hidden_act.apply_inplace(&mut a);
        Ok(a)
    }

    /// Reconstructs both views from hidden codes.
    pub fn decode(&self, h: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        self.check_cols("decode", h, self.hidden_dim())?;
        let d1 = self.x_dim();
        let bias = self.dec_bias.as_slice();
        let mut xr = matmul_nt(h, &self.dec_x)?;
        xr.add_row_vector(&bias[..d1])?;
        self.output_act.apply_inplace(&mut xr);
        let mut yr = matmul_nt(h, &self.dec_y)?;
        yr.add_row_vector(&bias[d1..])?;
        self.output_act.apply_inplace(&mut yr);
        Ok((xr, yr))
    }

    /// Parameter blocks in storage order: W, V, b, W', V', b'.
    pub fn blocks(&self) -> [&[f64]; 6] {
        [
            self.enc_x.as_slice(),
            self.enc_y.as_slice(),
            self.enc_bias.as_slice(),
            self.dec_x.as_slice(),
            self.dec_y.as_slice(),
            self.dec_bias.as_slice(),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.enc_x.as_mut_slice(),
            self.enc_y.as_mut_slice(),
            self.enc_bias.as_mut_slice(),
            self.dec_x.as_mut_slice(),
            self.dec_y.as_mut_slice(),
            self.dec_bias.as_mut_slice(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loop_encode(p: &CorrNetParams, x: Option<&[f64]>, y: Option<&[f64]>) -> Vec<f64> {
        (0..p.hidden_dim())
            .map(|j| {
                let mut a = p.enc_bias[j];
                if let Some(x) = x {
                    a += (0..p.x_dim())
                        .map(|i| p.enc_x.get(j, i) * x[i])
                        .sum::<f64>();
                }
                if let Some(y) = y {
                    a += (0..p.y_dim())
                        .map(|i| p.enc_y.get(j, i) * y[i])
                        .sum::<f64>();
                }
                p.hidden_act.apply(a)
            })
            .collect()
    }

    fn random_params(seed: u64, f: Activation, g: Activation) -> CorrNetParams {
        let mut rng = Rng::seed_from(seed);
        let mut p = CorrNetParams::new(4, 3, 5, f, g, ReconLoss::Squared, &mut rng).unwrap();
        p.enc_bias = DenseVector::from(vec![0.1, -0.2, 0.3, 0.0, 0.5]);
        p.dec_bias = DenseVector::from((0..7).map(|i| 0.05 * i as f64 - 0.1).collect::<Vec<_>>());
        p
    }

    #[test]
    fn zero_params_give_half_with_sigmoid() {
        let p = CorrNetParams::zeros(
            3,
            2,
            4,
            Activation::Sigmoid,
            Activation::Sigmoid,
            ReconLoss::Squared,
        );
        let mut rng = Rng::seed_from(0);
        let h = p
            .encode_both(&rng.normal_matrix(5, 3), &rng.normal_matrix(5, 2))
            .unwrap();
        assert!(h.as_slice().iter().all(|&v| v == 0.5));
        let (xr, yr) = p.decode(&h).unwrap();
        assert!(xr.as_slice().iter().chain(yr.as_slice()).all(|&v| v == 0.5));
    }

    #[test]
    fn identity_encoder_is_identity_map() {
        let mut p = CorrNetParams::zeros(
            3,
            2,
            3,
            Activation::Identity,
            Activation::Identity,
            ReconLoss::Squared,
        );
        p.enc_x = DenseMatrix::identity(3);
        let x = Rng::seed_from(1).normal_matrix(4, 3);
        assert_eq!(p.encode_x(&x).unwrap(), x);
    }

    #[test]
    fn zero_hidden_zero_bias_decodes_to_zero() {
        let p = random_params(2, Activation::Sigmoid, Activation::Identity);
        let mut q = p.clone();
        q.dec_bias = DenseVector::zeros(7);
        let (xr, yr) = q.decode(&DenseMatrix::zeros(3, 5)).unwrap();
        assert!(xr.as_slice().iter().chain(yr.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn single_view_encoders_zero_the_other_view() {
        let p = random_params(3, Activation::Tanh, Activation::Sigmoid);
        let mut rng = Rng::seed_from(4);
        let x = rng.normal_matrix(6, 4);
        let y = rng.normal_matrix(6, 3);
        assert_eq!(
            p.encode_x(&x).unwrap(),
            p.encode_both(&x, &DenseMatrix::zeros(6, 3)).unwrap()
        );
        assert_eq!(
            p.encode_y(&y).unwrap(),
            p.encode_both(&DenseMatrix::zeros(6, 4), &y).unwrap()
        );
        let mut q = p.clone();
        q.hidden_act = Activation::Identity;
        q.enc_y = DenseMatrix::zeros(5, 3);
        let hx = q.encode_x(&x).unwrap();
        assert!(q.encode_both(&x, &y).unwrap().max_abs_diff(&hx) < 1e-15);
    }

    #[test]
    fn encoders_match_scalar_loops() {
        for (f, seed) in [
            (Activation::Sigmoid, 5),
            (Activation::Tanh, 6),
            (Activation::Identity, 7),
        ] {
            let p = random_params(seed, f, Activation::Sigmoid);
            let mut rng = Rng::seed_from(seed + 100);
            let x = rng.normal_matrix(3, 4);
            let y = rng.normal_matrix(3, 3);
            let (hz, hx, hy) = (
                p.encode_both(&x, &y).unwrap(),
                p.encode_x(&x).unwrap(),
                p.encode_y(&y).unwrap(),
            );
            for i in 0..3 {
                let ez = loop_encode(&p, Some(x.row(i)), Some(y.row(i)));
                let ex = loop_encode(&p, Some(x.row(i)), None);
                let ey = loop_encode(&p, None, Some(y.row(i)));
                for j in 0..5 {
                    assert!((hz.get(i, j) - ez[j]).abs() < 1e-14);
                    assert!((hx.get(i, j) - ex[j]).abs() < 1e-14);
                    assert!((hy.get(i, j) - ey[j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn decoder_matches_scalar_loop() {
        let p = random_params(8, Activation::Sigmoid, Activation::Tanh);
        let h = Rng::seed_from(9).uniform_matrix(3, 5, 0.0, 1.0);
        let (xr, yr) = p.decode(&h).unwrap();
        for i in 0..3 {
            for o in 0..4 {
                let a =
                    p.dec_bias[o] + (0..5).map(|j| p.dec_x.get(o, j) * h.get(i, j)).sum::<f64>();
                assert!((xr.get(i, o) - a.tanh()).abs() < 1e-14);
            }
            for o in 0..3 {
                let a = p.dec_bias[4 + o]
                    + (0..5).map(|j| p.dec_y.get(o, j) * h.get(i, j)).sum::<f64>();
                assert!((yr.get(i, o) - a.tanh()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let p = random_params(1, Activation::Sigmoid, Activation::Sigmoid);
        assert!(p.encode_x(&DenseMatrix::zeros(2, 3)).is_err());
        assert!(p.encode_y(&DenseMatrix::zeros(2, 4)).is_err());
        assert!(p
            .encode_both(&DenseMatrix::zeros(2, 4), &DenseMatrix::zeros(3, 3))
            .is_err());
        assert!(p.decode(&DenseMatrix::zeros(2, 4)).is_err());
        assert!(CorrNetParams::new(
            0,
            2,
            2,
            Activation::Tanh,
            Activation::Tanh,
            ReconLoss::Squared,
            &mut Rng::seed_from(0)
        )
        .is_err());
        assert!(CorrNetParams::new(
            2,
            2,
            2,
            Activation::Tanh,
            Activation::Tanh,
            ReconLoss::CrossEntropy,
            &mut Rng::seed_from(0)
        )
        .is_err());
    }

    #[test]
    fn glorot_bounds() {
        let m = glorot_uniform(10, 20, &mut Rng::seed_from(3));
        let r = (6.0f64 / 30.0).sqrt();
        assert!(m.as_slice().iter().all(|v| v.abs() <= r));
    }
}
