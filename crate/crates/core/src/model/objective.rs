//! The two-view objective and its exact gradient.
//!
//! The engine works on a general network: optional encoder pathways per view,
//! a top [`CorrNetParams`] block, and optional decoder chains mapping the top
//! block's reconstructions back to the raw views. A shallow model is the case
//! where all pathways and chains are empty; the deep model reuses the same code.

use std::fmt;
use std::str::FromStr;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{accumulate_tn, matmul, matmul_nt, Activation, DenseMatrix, CORR_EPS};

use super::params::{CorrNetParams, Layer, ReconLoss};

/// The eight loss terms.
///
/// `L1..L3` reconstruct both views from the joint, x-only and y-only codes;
/// `L4` is the correlation between x-only and y-only codes; `L5`/`L6` are the
/// one-directional cross reconstructions and `L7`/`L8` the self reconstructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    L1,
    L2,
    L3,
    L4,
    L5,
    L6,
    L7,
    L8,
}

impl Term {
    pub const ALL: [Term; 8] = [
        Term::L1,
        Term::L2,
        Term::L3,
        Term::L4,
        Term::L5,
        Term::L6,
        Term::L7,
        Term::L8,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Term> {
        Term::ALL.get(i).copied()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.index() + 1)
    }
}

/// Which terms enter the objective, and the correlation weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTermMask {
    active: [bool; 8],
    pub lambda: f64,
}

impl LossTermMask {
    pub fn new(terms: &[Term], lambda: f64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument(
                "loss mask needs at least one term".into(),
            ));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        let mut active = [false; 8];
        for t in terms {
            active[t.index()] = true;
        }
        Ok(Self { active, lambda })
    }

    /// The full objective `L1 + L2 + L3 - lambda * corr`.
    pub fn corrnet(lambda: f64) -> Self {
        Self::new(&[Term::L1, Term::L2, Term::L3, Term::L4], lambda).expect("valid mask")
    }

    /// `L1 + L2 + L3` with no correlation term.
    pub fn reconstruction_only() -> Self {
        Self::new(&[Term::L1, Term::L2, Term::L3], 0.0).expect("valid mask")
    }

    pub fn single(term: Term, lambda: f64) -> Result<Self> {
        Self::new(&[term], lambda)
    }

    pub fn contains(&self, t: Term) -> bool {
        self.active[t.index()]
    }

    pub fn terms(&self) -> Vec<Term> {
        Term::ALL
            .into_iter()
            .filter(|t| self.contains(*t))
            .collect()
    }

    pub fn with(mut self, t: Term) -> Self {
        self.active[t.index()] = true;
        self
    }

    /// Removes a term; returns `None` if nothing would remain.
    pub fn without(mut self, t: Term) -> Option<Self> {
        self.active[t.index()] = false;
        self.active.iter().any(|&a| a).then_some(self)
    }

    /// Whether the objective needs the y view of a batch.
    pub fn needs_y(&self) -> bool {
        use Term::*;
        [L1, L2, L3, L4, L5, L6, L8]
            .iter()
            .any(|t| self.contains(*t))
    }

    /// Whether the objective needs the x view of a batch.
    pub fn needs_x(&self) -> bool {
        use Term::*;
        [L1, L2, L3, L4, L5, L6, L7]
            .iter()
            .any(|t| self.contains(*t))
    }
}

impl fmt::Display for LossTermMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.terms().iter().map(|t| t.to_string()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for LossTermMask {
    type Err = Error;

    /// Parses `L1+L2+L3+L4`, `1+2+3+4` or `1234` (lambda defaults to 0; set it afterwards).
    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for tok in s
            .split(|c: char| c == '+' || c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let digits = tok.trim_start_matches(['L', 'l']);
            if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
                return Err(Error::InvalidArgument(format!(
                    "bad loss term `{tok}` in mask `{s}`"
                )));
            }
            // a bare run of digits like "1234" lists several single-digit terms
            let idxs: Vec<usize> = if tok.starts_with(['L', 'l']) {
                vec![digits
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad loss term `{tok}`")))?]
            } else {
                digits
                    .chars()
                    .map(|c| c.to_digit(10).unwrap() as usize)
                    .collect()
            };
            for i in idxs {
                let t = i.checked_sub(1).and_then(Term::from_index).ok_or_else(|| {
                    Error::InvalidArgument(format!("loss term index {i} out of range 1..=8"))
                })?;
                terms.push(t);
            }
        }
        LossTermMask::new(&terms, 0.0)
    }
}

/// Per-term values of one objective evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    /// Reconstruction sums for active terms; for `L4` the signed contribution `-lambda * corr`.
    pub terms: [Option<f64>; 8],
    pub total: f64,
    /// Summed per-dimension correlation of the x-only and y-only codes, when `L4` is active.
    pub corr_value: Option<f64>,
}

impl LossBreakdown {
    pub fn term(&self, t: Term) -> Option<f64> {
        self.terms[t.index()]
    }

    /// Name of the first non-finite component, if any.
    pub fn non_finite_term(&self) -> Option<String> {
        for t in Term::ALL {
            if let Some(v) = self.term(t) {
                if !v.is_finite() {
                    return Some(t.to_string());
                }
            }
        }
        if self.corr_value.is_some_and(|c| !c.is_finite()) {
            return Some("corr".into());
        }
        (!self.total.is_finite()).then(|| "total".into())
    }
}

/// A pair of aligned views (rows are instances).
#[derive(Clone, Debug, PartialEq)]
pub struct TwoViewBatch {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
}

impl TwoViewBatch {
    pub fn new(x: DenseMatrix, y: DenseMatrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return dim_err(
                "TwoViewBatch::new",
                format!("{} x-rows vs {} y-rows", x.rows(), y.rows()),
            );
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }
}

/// Gradient of the objective, shaped like [`CorrNetParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct CorrNetGrad {
    pub enc_x: DenseMatrix,
    pub enc_y: DenseMatrix,
    pub enc_bias: Vec<f64>,
    pub dec_x: DenseMatrix,
    pub dec_y: DenseMatrix,
    pub dec_bias: Vec<f64>,
}

impl CorrNetGrad {
    pub fn zeros_like(p: &CorrNetParams) -> Self {
        let (k, d1, d2) = (p.hidden_dim(), p.x_dim(), p.y_dim());
        Self {
            enc_x: DenseMatrix::zeros(k, d1),
            enc_y: DenseMatrix::zeros(k, d2),
            enc_bias: vec![0.0; k],
            dec_x: DenseMatrix::zeros(d1, k),
            dec_y: DenseMatrix::zeros(d2, k),
            dec_bias: vec![0.0; d1 + d2],
        }
    }

    /// Blocks in the same order as [`CorrNetParams::blocks`].
    pub fn blocks(&self) -> [&[f64]; 6] {
        [
            self.enc_x.as_slice(),
            self.enc_y.as_slice(),
            &self.enc_bias,
            self.dec_x.as_slice(),
            self.dec_y.as_slice(),
            &self.dec_bias,
        ]
    }
}

/// Gradient of one [`Layer`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    fn zeros_like(l: &Layer) -> Self {
        Self {
            weight: DenseMatrix::zeros(l.weight.rows(), l.weight.cols()),
            bias: vec![0.0; l.bias.len()],
        }
    }
}

/// Borrowed view of a full network for objective evaluation.
pub(crate) struct Network<'a> {
    pub x_path: &'a [Layer],
    pub y_path: &'a [Layer],
    pub top: &'a CorrNetParams,
    pub x_dec: &'a [Layer],
    pub y_dec: &'a [Layer],
}

pub(crate) struct NetworkGrad {
    pub x_path: Vec<LayerGrad>,
    pub y_path: Vec<LayerGrad>,
    pub top: CorrNetGrad,
    pub x_dec: Vec<LayerGrad>,
    pub y_dec: Vec<LayerGrad>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Source {
    Joint = 0,
    XOnly = 1,
    YOnly = 2,
}

const SOURCES: [Source; 3] = [Source::Joint, Source::XOnly, Source::YOnly];

/// How many active terms use each (source code, reconstructed half) pair.
fn pair_weights(mask: &LossTermMask) -> [[f64; 2]; 3] {
    use Term::*;
    let mut w = [[0.0; 2]; 3];
    let mut add = |t: Term, s: Source, halves: &[usize]| {
        if mask.contains(t) {
            for &h in halves {
                w[s as usize][h] += 1.0;
            }
        }
    };
    add(L1, Source::Joint, &[0, 1]);
    add(L2, Source::XOnly, &[0, 1]);
    add(L3, Source::YOnly, &[0, 1]);
    add(L5, Source::XOnly, &[1]);
    add(L6, Source::YOnly, &[0]);
    add(L7, Source::XOnly, &[0]);
    add(L8, Source::YOnly, &[1]);
    w
}

#[derive(Clone, Copy)]
struct LayerRef<'a> {
    weight: &'a DenseMatrix,
    bias: &'a [f64],
    act: Activation,
}

impl<'a> From<&'a Layer> for LayerRef<'a> {
    fn from(l: &'a Layer) -> Self {
        LayerRef {
            weight: &l.weight,
            bias: l.bias.as_slice(),
            act: l.act,
        }
    }
}

/// Forward through a chain; returns each layer's output and the final pre-activation.
fn chain_forward(
    layers: &[LayerRef<'_>],
    input: &DenseMatrix,
    keep_pre: bool,
) -> (Vec<DenseMatrix>, Option<DenseMatrix>) {
    let mut outs: Vec<DenseMatrix> = Vec::with_capacity(layers.len());
    let mut pre_last = None;
    for (i, l) in layers.iter().enumerate() {
        let inp = if i == 0 { input } else { &outs[i - 1] };
        let mut a = matmul_nt(inp, l.weight).expect("shapes validated");
        a.add_row_vector(l.bias).expect("shapes validated");
        if keep_pre && i + 1 == layers.len() {
            pre_last = Some(a.clone());
        }
        l.act.apply_inplace(&mut a);
        outs.push(a);
    }
    (outs, pre_last)
}

/// Backward through a chain given the gradient at the final pre-activation.
/// Returns the gradient with respect to the chain input.
fn chain_backward(
    layers: &[LayerRef<'_>],
    input: &DenseMatrix,
    outs: &[DenseMatrix],
    mut d_pre: DenseMatrix,
    grads: &mut [(&mut DenseMatrix, &mut [f64])],
    need_input_grad: bool,
) -> Option<DenseMatrix> {
    for i in (0..layers.len()).rev() {
        let inp = if i == 0 { input } else { &outs[i - 1] };
        let (gw, gb) = &mut grads[i];
        accumulate_tn(gw, &d_pre, inp);
        add_column_sums(gb, &d_pre);
        if i == 0 && !need_input_grad {
            return None;
        }
        let mut d_in = matmul(&d_pre, layers[i].weight).expect("shapes validated");
        if i == 0 {
            return Some(d_in);
        }
        let prev_act = layers[i - 1].act;
        for (d, &o) in d_in.as_mut_slice().iter_mut().zip(outs[i - 1].as_slice()) {
            *d *= prev_act.derivative_from_output(o);
        }
        d_pre = d_in;
    }
    None
}

fn add_column_sums(acc: &mut [f64], m: &DenseMatrix) {
    for r in m.row_iter() {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
}

fn add_into(acc: &mut Option<DenseMatrix>, m: DenseMatrix) {
    match acc {
        Some(a) => a.axpy(1.0, &m).expect("same shape"),
        None => *acc = Some(m),
    }
}

/// Reconstruction loss summed over all entries, plus the gradient at the
/// final pre-activation (scaled by `weight`) when requested.
fn recon_loss_and_grad(
    loss: ReconLoss,
    act: Activation,
    target: &DenseMatrix,
    out: &DenseMatrix,
    pre: Option<&DenseMatrix>,
    weight: f64,
    want_grad: bool,
) -> (f64, Option<DenseMatrix>) {
    let t = target.as_slice();
    let r = out.as_slice();
    match loss {
        ReconLoss::Squared => {
            let value = t.iter().zip(r).map(|(a, b)| (b - a) * (b - a)).sum();
            let grad = want_grad.then(|| {
                let mut g = out.clone();
                for ((gv, &rv), &tv) in g.as_mut_slice().iter_mut().zip(r).zip(t) {
                    *gv = weight * 2.0 * (rv - tv) * act.derivative_from_output(rv);
                }
                g
            });
            (value, grad)
        }
        ReconLoss::CrossEntropy => {
            // sigmoid output: -[t ln s(a) + (1-t) ln(1-s(a))] = softplus(a) - t a
            let a = pre
                .expect("pre-activation kept for cross-entropy")
                .as_slice();
            let value = t
                .iter()
                .zip(a)
                .map(|(&tv, &av)| av.max(0.0) - tv * av + (-av.abs()).exp().ln_1p())
                .sum();
            let grad = want_grad.then(|| {
                let mut g = out.clone();
                for ((gv, &rv), &tv) in g.as_mut_slice().iter_mut().zip(r).zip(t) {
                    *gv = weight * (rv - tv);
                }
                g
            });
            (value, grad)
        }
    }
}

/// Summed per-column Pearson correlation with the stabilized denominator,
/// and optionally its gradient with respect to each input matrix.
pub(crate) fn correlation_term(
    hx: &DenseMatrix,
    hy: &DenseMatrix,
    want_grad: bool,
) -> (f64, Option<(DenseMatrix, DenseMatrix)>) {
    let (n, k) = hx.shape();
    let mx = hx.column_means();
    let my = hy.column_means();
    let mut sxy = vec![0.0; k];
    let mut sxx = vec![0.0; k];
    let mut syy = vec![0.0; k];
    for i in 0..n {
        let (rx, ry) = (hx.row(i), hy.row(i));
        for j in 0..k {
            let a = rx[j] - mx[j];
            let c = ry[j] - my[j];
            sxy[j] += a * c;
            sxx[j] += a * a;
            syy[j] += c * c;
        }
    }
    let denom: Vec<f64> = (0..k)
        .map(|j| (sxx[j] * syy[j] + CORR_EPS).sqrt())
        .collect();
    let rho: Vec<f64> = (0..k).map(|j| sxy[j] / denom[j]).collect();
    let value = rho.iter().sum();
    if !want_grad {
        return (value, None);
    }
    // d rho / d hx_ij = c_ij / D - rho * syy * a_ij / D^2, symmetric for hy;
    // centering drops out because both expressions sum to zero over i.
    let mut gx = DenseMatrix::zeros(n, k);
    let mut gy = DenseMatrix::zeros(n, k);
    for i in 0..n {
        let (rx, ry) = (hx.row(i), hy.row(i));
        let ox = gx.row_mut(i);
        for j in 0..k {
            let a = rx[j] - mx[j];
            let c = ry[j] - my[j];
            ox[j] = c / denom[j] - rho[j] * syy[j] * a / (denom[j] * denom[j]);
        }
        let oy = gy.row_mut(i);
        for j in 0..k {
            let a = rx[j] - mx[j];
            let c = ry[j] - my[j];
            oy[j] = a / denom[j] - rho[j] * sxx[j] * c / (denom[j] * denom[j]);
        }
    }
    (value, Some((gx, gy)))
}

fn check_targets_binary(m: &DenseMatrix, view: &str) -> Result<()> {
    if m.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument(format!(
            "cross-entropy reconstruction needs {view}-view targets in [0, 1]"
        )));
    }
    Ok(())
}

impl<'a> Network<'a> {
    pub(crate) fn shallow(p: &'a CorrNetParams) -> Self {
        Network {
            x_path: &[],
            y_path: &[],
            top: p,
            x_dec: &[],
            y_dec: &[],
        }
    }

    fn raw_x_dim(&self) -> usize {
        self.x_path
            .first()
            .map_or(self.top.x_dim(), |l| l.input_dim())
    }

    fn raw_y_dim(&self) -> usize {
        self.y_path
            .first()
            .map_or(self.top.y_dim(), |l| l.input_dim())
    }

    fn final_act(&self, half: usize) -> Activation {
        let chain = if half == 0 { self.x_dec } else { self.y_dec };
        chain.last().map_or(self.top.output_act, |l| l.act)
    }

    fn decoder_chain(&self, half: usize) -> Vec<LayerRef<'a>> {
        let d1 = self.top.x_dim();
        let top = self.top;
        let first = if half == 0 {
            LayerRef {
                weight: &top.dec_x,
                bias: &top.dec_bias.as_slice()[..d1],
                act: top.output_act,
            }
        } else {
            LayerRef {
                weight: &top.dec_y,
                bias: &top.dec_bias.as_slice()[d1..],
                act: top.output_act,
            }
        };
        let rest = if half == 0 { self.x_dec } else { self.y_dec };
        std::iter::once(first)
            .chain(rest.iter().map(LayerRef::from))
            .collect()
    }

    /// Evaluates the objective on a batch; `x`/`y` may be absent when the mask does not need them.
    pub(crate) fn evaluate(
        &self,
        x: Option<&DenseMatrix>,
        y: Option<&DenseMatrix>,
        mask: &LossTermMask,
        want_grad: bool,
    ) -> Result<(LossBreakdown, Option<NetworkGrad>)> {
        let top = self.top;
        let weights = pair_weights(mask);
        let use_corr = mask.contains(Term::L4);
        let src_needed = |s: Source| {
            weights[s as usize].iter().any(|&w| w > 0.0)
                || (use_corr && matches!(s, Source::XOnly | Source::YOnly))
        };
        let x_needed = mask.needs_x();
        let y_needed = mask.needs_y();

        let x = match (x, x_needed) {
            (Some(x), _) => Some(x),
            (None, true) => {
                return Err(Error::InvalidArgument(format!(
                    "mask {mask} needs the x view"
                )))
            }
            (None, false) => None,
        };
        let y = match (y, y_needed) {
            (Some(y), _) => Some(y),
            (None, true) => {
                return Err(Error::InvalidArgument(format!(
                    "mask {mask} needs the y view"
                )))
            }
            (None, false) => None,
        };
        if let Some(x) = x {
            if x.cols() != self.raw_x_dim() {
                return dim_err(
                    "objective",
                    format!(
                        "x has {} columns, model expects {}",
                        x.cols(),
                        self.raw_x_dim()
                    ),
                );
            }
        }
        if let Some(y) = y {
            if y.cols() != self.raw_y_dim() {
                return dim_err(
                    "objective",
                    format!(
                        "y has {} columns, model expects {}",
                        y.cols(),
                        self.raw_y_dim()
                    ),
                );
            }
        }
        let n = match (x, y) {
            (Some(x), Some(y)) if x.rows() != y.rows() => {
                return dim_err(
                    "objective",
                    format!("{} x-rows vs {} y-rows", x.rows(), y.rows()),
                );
            }
            (Some(x), _) => x.rows(),
            (None, Some(y)) => y.rows(),
            (None, None) => 0,
        };
        if use_corr && n < 2 {
            return Err(Error::InvalidArgument(format!(
                "the correlation term needs at least 2 rows, got {n}"
            )));
        }
        if top.recon_loss == ReconLoss::CrossEntropy {
            for half in 0..2 {
                if self.final_act(half) != Activation::Sigmoid {
                    return Err(Error::InvalidArgument(
                        "cross-entropy reconstruction requires a sigmoid output activation".into(),
                    ));
                }
            }
            let x_target = weights.iter().any(|w| w[0] > 0.0);
            let y_target = weights.iter().any(|w| w[1] > 0.0);
            if let (Some(x), true) = (x, x_target) {
                check_targets_binary(x, "x")?;
            }
            if let (Some(y), true) = (y, y_target) {
                check_targets_binary(y, "y")?;
            }
        }

        // Encoder pathways.
        let x_path: Vec<LayerRef> = self.x_path.iter().map(LayerRef::from).collect();
        let y_path: Vec<LayerRef> = self.y_path.iter().map(LayerRef::from).collect();
        let (px_outs, _) = match x {
            Some(x) if !x_path.is_empty() => chain_forward(&x_path, x, false),
            _ => (Vec::new(), None),
        };
        let (py_outs, _) = match y {
            Some(y) if !y_path.is_empty() => chain_forward(&y_path, y, false),
            _ => (Vec::new(), None),
        };
        let px = x.map(|x| px_outs.last().unwrap_or(x));
        let py = y.map(|y| py_outs.last().unwrap_or(y));

        // Top encoder: the joint pre-activation is the sum of the two single-view ones.
        let px_proj = px
            .filter(|_| src_needed(Source::Joint) || src_needed(Source::XOnly))
            .map(|px| matmul_nt(px, &top.enc_x).expect("validated"));
        let py_proj = py
            .filter(|_| src_needed(Source::Joint) || src_needed(Source::YOnly))
            .map(|py| matmul_nt(py, &top.enc_y).expect("validated"));
        let mut hidden: [Option<DenseMatrix>; 3] = [None, None, None];
        for s in SOURCES {
            if !src_needed(s) {
                continue;
            }
            let mut a = match s {
                Source::Joint => {
                    let mut a = px_proj.clone().expect("x view present");
                    a.axpy(1.0, py_proj.as_ref().expect("y view present"))
                        .expect("same shape");
                    a
                }
                Source::XOnly => px_proj.clone().expect("x view present"),
                Source::YOnly => py_proj.clone().expect("y view present"),
            };
            a.add_row_vector(top.enc_bias.as_slice())
                .expect("validated");
            top.hidden_act.apply_inplace(&mut a);
            hidden[s as usize] = Some(a);
        }

        let mut grad = want_grad.then(|| NetworkGrad {
            x_path: self.x_path.iter().map(LayerGrad::zeros_like).collect(),
            y_path: self.y_path.iter().map(LayerGrad::zeros_like).collect(),
            top: CorrNetGrad::zeros_like(top),
            x_dec: self.x_dec.iter().map(LayerGrad::zeros_like).collect(),
            y_dec: self.y_dec.iter().map(LayerGrad::zeros_like).collect(),
        });
        let mut d_hidden: [Option<DenseMatrix>; 3] = [None, None, None];

        // Decoders and reconstruction errors.
        let mut errors = [[0.0f64; 2]; 3];
        let chains = [self.decoder_chain(0), self.decoder_chain(1)];
        let d1 = top.x_dim();
        for s in SOURCES {
            for half in 0..2 {
                let w = weights[s as usize][half];
                if w == 0.0 {
                    continue;
                }
                let h = hidden[s as usize].as_ref().expect("source computed");
                let target = if half == 0 {
                    x.expect("x view present")
                } else {
                    y.expect("y view present")
                };
                let chain = &chains[half];
                let keep_pre = top.recon_loss == ReconLoss::CrossEntropy;
                let (outs, pre) = chain_forward(chain, h, keep_pre);
                let out = outs.last().expect("chain non-empty");
                let act = chain.last().expect("chain non-empty").act;
                let (value, d_pre) = recon_loss_and_grad(
                    top.recon_loss,
                    act,
                    target,
                    out,
                    pre.as_ref(),
                    w,
                    want_grad,
                );
                errors[s as usize][half] = value;
                if let (Some(g), Some(d_pre)) = (grad.as_mut(), d_pre) {
                    let (top_w, top_b, rest) = if half == 0 {
                        (&mut g.top.dec_x, &mut g.top.dec_bias[..d1], &mut g.x_dec)
                    } else {
                        (&mut g.top.dec_y, &mut g.top.dec_bias[d1..], &mut g.y_dec)
                    };
                    let mut slots: Vec<(&mut DenseMatrix, &mut [f64])> =
                        Vec::with_capacity(chain.len());
                    slots.push((top_w, top_b));
                    for lg in rest.iter_mut() {
                        slots.push((&mut lg.weight, &mut lg.bias));
                    }
                    let d_h = chain_backward(chain, h, &outs, d_pre, &mut slots, true)
                        .expect("input grad requested");
                    add_into(&mut d_hidden[s as usize], d_h);
                }
            }
        }

        // Correlation between the single-view codes.
        let mut corr_value = None;
        if use_corr {
            let hx = hidden[Source::XOnly as usize]
                .as_ref()
                .expect("x code computed");
            let hy = hidden[Source::YOnly as usize]
                .as_ref()
                .expect("y code computed");
            let (c, g) = correlation_term(hx, hy, want_grad);
            corr_value = Some(c);
            if let Some((mut gx, mut gy)) = g {
                gx.scale(-mask.lambda);
                gy.scale(-mask.lambda);
                add_into(&mut d_hidden[Source::XOnly as usize], gx);
                add_into(&mut d_hidden[Source::YOnly as usize], gy);
            }
        }

        let e = |s: Source, h: usize| errors[s as usize][h];
        let mut terms = [None; 8];
        for t in mask.terms() {
            terms[t.index()] = Some(match t {
                Term::L1 => e(Source::Joint, 0) + e(Source::Joint, 1),
                Term::L2 => e(Source::XOnly, 0) + e(Source::XOnly, 1),
                Term::L3 => e(Source::YOnly, 0) + e(Source::YOnly, 1),
                Term::L4 => -mask.lambda * corr_value.expect("computed"),
                Term::L5 => e(Source::XOnly, 1),
                Term::L6 => e(Source::YOnly, 0),
                Term::L7 => e(Source::XOnly, 0),
                Term::L8 => e(Source::YOnly, 1),
            });
        }
        let total = terms.iter().flatten().sum();
        let breakdown = LossBreakdown {
            terms,
            total,
            corr_value,
        };

        let Some(mut g) = grad else {
            return Ok((breakdown, None));
        };

        // Back through the top encoder.
        let mut d_pre: [Option<DenseMatrix>; 3] = [None, None, None];
        for s in SOURCES {
            if let (Some(mut d), Some(h)) =
                (d_hidden[s as usize].take(), hidden[s as usize].as_ref())
            {
                for (dv, &hv) in d.as_mut_slice().iter_mut().zip(h.as_slice()) {
                    *dv *= top.hidden_act.derivative_from_output(hv);
                }
                add_column_sums(&mut g.top.enc_bias, &d);
                d_pre[s as usize] = Some(d);
            }
        }
        let combine = |a: &Option<DenseMatrix>, b: &Option<DenseMatrix>| -> Option<DenseMatrix> {
            match (a, b) {
                (Some(a), Some(b)) => {
                    let mut s = a.clone();
                    s.axpy(1.0, b).expect("same shape");
                    Some(s)
                }
                (Some(a), None) => Some(a.clone()),
                (None, Some(b)) => Some(b.clone()),
                (None, None) => None,
            }
        };
        let d_x_side = combine(
            &d_pre[Source::Joint as usize],
            &d_pre[Source::XOnly as usize],
        );
        let d_y_side = combine(
            &d_pre[Source::Joint as usize],
            &d_pre[Source::YOnly as usize],
        );

        if let (Some(d), Some(px)) = (d_x_side.as_ref(), px) {
            accumulate_tn(&mut g.top.enc_x, d, px);
            if !x_path.is_empty() {
                let d_px = matmul(d, &top.enc_x).expect("validated");
                backprop_pathway(
                    &x_path,
                    x.expect("x present"),
                    &px_outs,
                    d_px,
                    &mut g.x_path,
                );
            }
        }
        if let (Some(d), Some(py)) = (d_y_side.as_ref(), py) {
            accumulate_tn(&mut g.top.enc_y, d, py);
            if !y_path.is_empty() {
                let d_py = matmul(d, &top.enc_y).expect("validated");
                backprop_pathway(
                    &y_path,
                    y.expect("y present"),
                    &py_outs,
                    d_py,
                    &mut g.y_path,
                );
            }
        }
        Ok((breakdown, Some(g)))
    }
}

fn backprop_pathway(
    layers: &[LayerRef<'_>],
    input: &DenseMatrix,
    outs: &[DenseMatrix],
    mut d_out: DenseMatrix,
    grads: &mut [LayerGrad],
) {
    let last = layers.len() - 1;
    for (d, &o) in d_out.as_mut_slice().iter_mut().zip(outs[last].as_slice()) {
        *d *= layers[last].act.derivative_from_output(o);
    }
    let mut slots: Vec<(&mut DenseMatrix, &mut [f64])> = grads
        .iter_mut()
        .map(|g| (&mut g.weight, g.bias.as_mut_slice()))
        .collect();
    chain_backward(layers, input, outs, d_out, &mut slots, false);
}

/// Objective value of `mask` on `batch`.
pub fn loss(p: &CorrNetParams, batch: &TwoViewBatch, mask: &LossTermMask) -> Result<LossBreakdown> {
    p.validate()?;
    Ok(Network::shallow(p)
        .evaluate(Some(&batch.x), Some(&batch.y), mask, false)?
        .0)
}

/// Objective value and its exact gradient with respect to every parameter.
pub fn loss_and_grad(
    p: &CorrNetParams,
    batch: &TwoViewBatch,
    mask: &LossTermMask,
) -> Result<(LossBreakdown, CorrNetGrad)> {
    p.validate()?;
    let (b, g) = Network::shallow(p).evaluate(Some(&batch.x), Some(&batch.y), mask, true)?;
    Ok((b, g.expect("gradient requested").top))
}

/// Exact gradient of `loss(p, batch, mask).total`.
pub fn grad(p: &CorrNetParams, batch: &TwoViewBatch, mask: &LossTermMask) -> Result<CorrNetGrad> {
    Ok(loss_and_grad(p, batch, mask)?.1)
}

/// Objective and gradient for a single-view batch (`J_X` or `J_Y`): the view's self-reconstruction only.
pub fn single_view_loss_and_grad(
    p: &CorrNetParams,
    view: super::ViewTag,
    data: &DenseMatrix,
) -> Result<(LossBreakdown, CorrNetGrad)> {
    p.validate()?;
    let (mask, x, y) = match view {
        super::ViewTag::X => (LossTermMask::single(Term::L7, 0.0)?, Some(data), None),
        super::ViewTag::Y => (LossTermMask::single(Term::L8, 0.0)?, None, Some(data)),
    };
    let (b, g) = Network::shallow(p).evaluate(x, y, &mask, true)?;
    Ok((b, g.expect("gradient requested").top))
}
