//! Mini-batch optimization: SGD and RMSProp over the two-view objective, mixed
//! single-view streams, the MAE schedule and merged bag-of-words batches.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use log::warn;

use crate::error::{Error, Result};
use crate::model::{
    CorrNetParams, LossBreakdown, LossTermMask, Network, NetworkGrad, Term, TwoViewBatch, ViewTag,
};
use crate::numerics::{DenseMatrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            _ => Err(Error::InvalidArgument(format!(
                "unknown optimizer `{s}` (expected sgd or rmsprop)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    /// Correlation weight; overrides the lambda stored in `mask`.
    pub lambda: f64,
    pub mask: LossTermMask,
    pub seed: u64,
    /// Rows merged into one bag-of-words instance per batch (1 = no merging).
    pub merge_factor: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 100,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::RmsProp,
            rmsprop_decay: 0.9,
            rmsprop_eps: 1e-6,
            lambda: 2.0,
            mask: LossTermMask::corrnet(2.0),
            seed: 0,
            merge_factor: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.mask.contains(Term::L4) && self.batch_size < 2 {
            return bad("batch_size must be >= 2 when the correlation term is active".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return bad(format!(
                "rmsprop_decay must be in [0, 1), got {}",
                self.rmsprop_decay
            ));
        }
        if !(self.rmsprop_eps.is_finite() && self.rmsprop_eps > 0.0) {
            return bad(format!("rmsprop_eps must be > 0, got {}", self.rmsprop_eps));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if self.merge_factor == 0 {
            return bad("merge_factor must be >= 1".into());
        }
        Ok(())
    }

    /// The mask with this config's lambda.
    pub fn effective_mask(&self) -> LossTermMask {
        let mut m = self.mask;
        m.lambda = self.lambda;
        m
    }
}

/// One view's data without its partner.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleViewBatch {
    pub view: ViewTag,
    pub data: DenseMatrix,
}

/// `theta <- theta - lr * g`.
pub fn sgd_step(theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
    if theta.len() != grad.len() {
        return crate::error::dim_err(
            "sgd_step",
            format!("{} parameters vs {} gradients", theta.len(), grad.len()),
        );
    }
    for (t, g) in theta.iter_mut().zip(grad) {
        *t -= lr * g;
    }
    Ok(())
}

/// `s <- decay * s + (1 - decay) * g^2; theta <- theta - lr * g / sqrt(s + eps)`.
pub fn rmsprop_step(
    theta: &mut [f64],
    state: &mut [f64],
    grad: &[f64],
    lr: f64,
    decay: f64,
    eps: f64,
) -> Result<()> {
    if theta.len() != grad.len() || state.len() != grad.len() {
        return crate::error::dim_err(
            "rmsprop_step",
            format!(
                "{} parameters, {} state entries, {} gradients",
                theta.len(),
                state.len(),
                grad.len()
            ),
        );
    }
    for ((t, s), &g) in theta.iter_mut().zip(state.iter_mut()).zip(grad) {
        *s = decay * *s + (1.0 - decay) * g * g;
        *t -= lr * g / (*s + eps).sqrt();
    }
    Ok(())
}

/// Per-block optimizer state, created lazily on the first step.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    kind: OptimizerKind,
    decay: f64,
    eps: f64,
    accum: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            kind: cfg.optimizer,
            decay: cfg.rmsprop_decay,
            eps: cfg.rmsprop_eps,
            accum: Vec::new(),
        }
    }

    /// Squared-gradient accumulators (empty for SGD or before the first step).
    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.accum
    }

    fn apply(
        &mut self,
        params: Vec<&mut [f64]>,
        grads: Vec<&[f64]>,
        frozen: &[bool],
        lr: f64,
    ) -> Result<()> {
        if self.kind == OptimizerKind::RmsProp && self.accum.is_empty() {
            self.accum = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        for (i, (theta, g)) in params.into_iter().zip(grads).enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => sgd_step(theta, g, lr)?,
                OptimizerKind::RmsProp => {
                    rmsprop_step(theta, &mut self.accum[i], g, lr, self.decay, self.eps)?
                }
            }
        }
        Ok(())
    }
}

/// Anything trainable by the objective engine.
pub(crate) trait Trainable {
    fn network(&self) -> Network<'_>;
    /// Parameter blocks in the order of [`grad_blocks`].
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;
    /// Per-block freeze flags (same order); empty means nothing frozen.
    fn frozen_blocks(&self) -> Vec<bool> {
        Vec::new()
    }
}

impl Trainable for CorrNetParams {
    fn network(&self) -> Network<'_> {
        Network::shallow(self)
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.blocks_mut().into()
    }
}

/// Gradient blocks: x pathway, y pathway, top (W, V, b, W', V', b'), x decoders, y decoders.
pub(crate) fn grad_blocks(g: &NetworkGrad) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    for l in g.x_path.iter().chain(&g.y_path) {
        out.push(l.weight.as_slice());
        out.push(&l.bias);
    }
    out.extend(g.top.blocks());
    for l in g.x_dec.iter().chain(&g.y_dec) {
        out.push(l.weight.as_slice());
        out.push(&l.bias);
    }
    out
}

/// Mean per-term losses of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub terms: [Option<f64>; 8],
    pub total: f64,
    pub corr_value: Option<f64>,
    pub steps: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// `epoch,L1..L8,total,corr`; absent terms are empty fields. Wall-clock
    /// time is left out so equal runs give identical files.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,L1,L2,L3,L4,L5,L6,L7,L8,total,corr\n");
        let opt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        for e in &self.epochs {
            let _ = write!(s, "{}", e.epoch);
            for t in e.terms {
                let _ = write!(s, ",{}", opt(t));
            }
            let _ = writeln!(s, ",{},{}", e.total, opt(e.corr_value));
        }
        s
    }
}

/// Progress of one optimizer step.
#[derive(Clone, Debug)]
pub struct StepInfo<'a> {
    pub epoch: usize,
    pub step: usize,
    pub kind: StepKind,
    pub breakdown: &'a LossBreakdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    TwoView,
    XOnly,
    YOnly,
}

/// Training callbacks; every method has a no-op default.
pub trait TrainObserver {
    fn on_step(&mut self, _info: &StepInfo<'_>) {}
    fn on_epoch(&mut self, _log: &EpochLog) {}
}

impl TrainObserver for () {}

/// Counts steps and keeps every epoch log.
#[derive(Clone, Debug, Default)]
pub struct CountingObserver {
    pub steps: usize,
    pub epochs: Vec<EpochLog>,
}

impl TrainObserver for CountingObserver {
    fn on_step(&mut self, _info: &StepInfo<'_>) {
        self.steps += 1;
    }

    fn on_epoch(&mut self, log: &EpochLog) {
        self.epochs.push(log.clone());
    }
}

#[derive(Default)]
struct EpochAccum {
    sums: [f64; 8],
    counts: [usize; 8],
    total: f64,
    corr: f64,
    corr_n: usize,
    steps: usize,
}

impl EpochAccum {
    fn add(&mut self, b: &LossBreakdown) {
        for (i, t) in b.terms.iter().enumerate() {
            if let Some(v) = t {
                self.sums[i] += v;
                self.counts[i] += 1;
            }
        }
        self.total += b.total;
        if let Some(c) = b.corr_value {
            self.corr += c;
            self.corr_n += 1;
        }
        self.steps += 1;
    }

    fn finish(&self, epoch: usize, seconds: f64) -> EpochLog {
        let mut terms = [None; 8];
        for i in 0..8 {
            if self.counts[i] > 0 {
                terms[i] = Some(self.sums[i] / self.counts[i] as f64);
            }
        }
        let steps = self.steps.max(1) as f64;
        EpochLog {
            epoch,
            terms,
            total: self.total / steps,
            corr_value: (self.corr_n > 0).then(|| self.corr / self.corr_n as f64),
            steps: self.steps,
            seconds,
        }
    }
}

pub(crate) enum StepData<'a> {
    Two(&'a DenseMatrix, &'a DenseMatrix),
    X(&'a DenseMatrix),
    Y(&'a DenseMatrix),
}

/// Runs one objective evaluation and parameter update.
pub(crate) fn step<M: Trainable>(
    model: &mut M,
    opt: &mut OptimizerState,
    data: StepData<'_>,
    mask: &LossTermMask,
    lr: f64,
    where_: impl Fn() -> String,
) -> Result<Option<LossBreakdown>> {
    let (x, y, mask) = match data {
        StepData::Two(x, y) => {
            let mut mask = *mask;
            if x.rows() < 2 && mask.contains(Term::L4) {
                match mask.without(Term::L4) {
                    Some(m) => {
                        warn!("{}: batch of {} row(s) is too small for the correlation term; skipping it", where_(), x.rows());
                        mask = m;
                    }
                    None => {
                        warn!(
                            "{}: batch of {} row(s) has no usable term; skipped",
                            where_(),
                            x.rows()
                        );
                        return Ok(None);
                    }
                }
            }
            (Some(x), Some(y), mask)
        }
        StepData::X(x) => (Some(x), None, LossTermMask::single(Term::L7, 0.0)?),
        StepData::Y(y) => (None, Some(y), LossTermMask::single(Term::L8, 0.0)?),
    };
    let (breakdown, grad) = model.network().evaluate(x, y, &mask, true)?;
    if let Some(term) = breakdown.non_finite_term() {
        return Err(Error::NonFinite(format!("loss term {term} ({})", where_())));
    }
    let grad = grad.expect("gradient requested");
    let blocks = grad_blocks(&grad);
    if blocks.iter().any(|b| b.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("gradient ({})", where_())));
    }
    let frozen = model.frozen_blocks();
    opt.apply(model.param_blocks_mut(), blocks, &frozen, lr)?;
    Ok(Some(breakdown))
}

fn check_batch_dims(
    net: &Network<'_>,
    x: Option<&DenseMatrix>,
    y: Option<&DenseMatrix>,
) -> Result<()> {
    let xd = net
        .x_path
        .first()
        .map_or(net.top.x_dim(), |l| l.input_dim());
    let yd = net
        .y_path
        .first()
        .map_or(net.top.y_dim(), |l| l.input_dim());
    if let Some(x) = x {
        if x.cols() != xd {
            return crate::error::dim_err(
                "train",
                format!("x batch has {} columns, model expects {xd}", x.cols()),
            );
        }
    }
    if let Some(y) = y {
        if y.cols() != yd {
            return crate::error::dim_err(
                "train",
                format!("y batch has {} columns, model expects {yd}", y.cols()),
            );
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Slot {
    Two(usize),
    X(usize),
    Y(usize),
}

pub(crate) fn train_mixed_generic<M: Trainable>(
    model: &mut M,
    two_view: &[TwoViewBatch],
    x_only: &[SingleViewBatch],
    y_only: &[SingleViewBatch],
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainLog> {
    cfg.validate()?;
    for b in x_only {
        if b.view != ViewTag::X {
            return Err(Error::InvalidArgument(
                "x-only stream contains a y batch".into(),
            ));
        }
    }
    for b in y_only {
        if b.view != ViewTag::Y {
            return Err(Error::InvalidArgument(
                "y-only stream contains an x batch".into(),
            ));
        }
    }
    {
        let net = model.network();
        for b in two_view {
            check_batch_dims(&net, Some(&b.x), Some(&b.y))?;
        }
        for b in x_only {
            check_batch_dims(&net, Some(&b.data), None)?;
        }
        for b in y_only {
            check_batch_dims(&net, None, Some(&b.data))?;
        }
    }
    let merged: Vec<TwoViewBatch>;
    let two_view = if cfg.merge_factor > 1 {
        merged = two_view
            .iter()
            .map(|b| merge_bow(b, cfg.merge_factor))
            .collect::<Result<_>>()?;
        &merged[..]
    } else {
        two_view
    };
    let mask = cfg.effective_mask();
    let mut rng = Rng::seed_from(cfg.seed);
    let mut opt = OptimizerState::new(cfg);
    let mut log = TrainLog::default();
    let mut slots: Vec<Slot> = (0..two_view.len())
        .map(Slot::Two)
        .chain((0..x_only.len()).map(Slot::X))
        .chain((0..y_only.len()).map(Slot::Y))
        .collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        rng.shuffle(&mut slots);
        let mut acc = EpochAccum::default();
        for (si, slot) in slots.iter().enumerate() {
            let (data, kind) = match *slot {
                Slot::Two(i) => (
                    StepData::Two(&two_view[i].x, &two_view[i].y),
                    StepKind::TwoView,
                ),
                Slot::X(i) => (StepData::X(&x_only[i].data), StepKind::XOnly),
                Slot::Y(i) => (StepData::Y(&y_only[i].data), StepKind::YOnly),
            };
            let where_ = || format!("epoch {epoch}, step {si}");
            if let Some(b) = step(model, &mut opt, data, &mask, cfg.learning_rate, where_)? {
                observer.on_step(&StepInfo {
                    epoch,
                    step: si,
                    kind,
                    breakdown: &b,
                });
                acc.add(&b);
            }
        }
        let e = acc.finish(epoch, start.elapsed().as_secs_f64());
        observer.on_epoch(&e);
        log.epochs.push(e);
    }
    Ok(log)
}

pub(crate) fn train_dataset_generic<M: Trainable>(
    model: &mut M,
    data: &TwoViewBatch,
    cfg: &TrainConfig,
    schedule: &[LossTermMask],
    observer: &mut dyn TrainObserver,
) -> Result<TrainLog> {
    cfg.validate()?;
    check_batch_dims(&model.network(), Some(&data.x), Some(&data.y))?;
    let mut rng = Rng::seed_from(cfg.seed);
    let mut opt = OptimizerState::new(cfg);
    let mut log = TrainLog::default();
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        rng.shuffle(&mut order);
        let mut acc = EpochAccum::default();
        let mut si = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = data.select(chunk);
            if cfg.merge_factor > 1 {
                batch = merge_bow(&batch, cfg.merge_factor)?;
            }
            for mask in schedule {
                let where_ = || format!("epoch {epoch}, step {si}");
                if let Some(b) = step(
                    model,
                    &mut opt,
                    StepData::Two(&batch.x, &batch.y),
                    mask,
                    cfg.learning_rate,
                    where_,
                )? {
                    observer.on_step(&StepInfo {
                        epoch,
                        step: si,
                        kind: StepKind::TwoView,
                        breakdown: &b,
                    });
                    acc.add(&b);
                }
                si += 1;
            }
        }
        let e = acc.finish(epoch, start.elapsed().as_secs_f64());
        observer.on_epoch(&e);
        log.epochs.push(e);
    }
    Ok(log)
}

/// Trains on a fixed sequence of two-view batches, visiting them in a
/// seed-determined order each epoch.
pub fn train(
    p: CorrNetParams,
    two_view: &[TwoViewBatch],
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(CorrNetParams, TrainLog)> {
    train_mixed(p, two_view, &[], &[], cfg, observer)
}

/// Trains on two-view batches interleaved with x-only and y-only batches.
///
/// Two-view batches step on the configured objective; single-view batches step
/// on their own self-reconstruction, which leaves the other view's parameters
/// untouched.
pub fn train_mixed(
    mut p: CorrNetParams,
    two_view: &[TwoViewBatch],
    x_only: &[SingleViewBatch],
    y_only: &[SingleViewBatch],
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(CorrNetParams, TrainLog)> {
    p.validate()?;
    let log = train_mixed_generic(&mut p, two_view, x_only, y_only, cfg, observer)?;
    Ok((p, log))
}

/// Trains on a whole dataset, reshuffling instances into fresh mini-batches every epoch.
pub fn train_dataset(
    mut p: CorrNetParams,
    data: &TwoViewBatch,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(CorrNetParams, TrainLog)> {
    p.validate()?;
    let log = train_dataset_generic(&mut p, data, cfg, &[cfg.effective_mask()], observer)?;
    Ok((p, log))
}

/// The three single-term masks of the MAE schedule, in update order.
pub fn mae_schedule() -> [LossTermMask; 3] {
    [Term::L2, Term::L3, Term::L1].map(|t| LossTermMask::single(t, 0.0).expect("valid"))
}

/// Multimodal-autoencoder training: for each mini-batch, one update on L2,
/// then one on L3, then one on L1. The config's mask and lambda are ignored.
pub fn train_mae(
    mut p: CorrNetParams,
    two_view: &[TwoViewBatch],
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(CorrNetParams, TrainLog)> {
    p.validate()?;
    let mut cfg = cfg.clone();
    cfg.mask = LossTermMask::reconstruction_only();
    cfg.validate()?;
    let mut rng = Rng::seed_from(cfg.seed);
    let mut opt = OptimizerState::new(&cfg);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..two_view.len()).collect();
    for b in two_view {
        check_batch_dims(&p.network(), Some(&b.x), Some(&b.y))?;
    }
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        rng.shuffle(&mut order);
        let mut acc = EpochAccum::default();
        let mut si = 0;
        for &bi in &order {
            let merged;
            let batch = if cfg.merge_factor > 1 {
                merged = merge_bow(&two_view[bi], cfg.merge_factor)?;
                &merged
            } else {
                &two_view[bi]
            };
            for mask in mae_schedule() {
                let where_ = || format!("epoch {epoch}, step {si}");
                if let Some(b) = step(
                    &mut p,
                    &mut opt,
                    StepData::Two(&batch.x, &batch.y),
                    &mask,
                    cfg.learning_rate,
                    where_,
                )? {
                    observer.on_step(&StepInfo {
                        epoch,
                        step: si,
                        kind: StepKind::TwoView,
                        breakdown: &b,
                    });
                    acc.add(&b);
                }
                si += 1;
            }
        }
        let e = acc.finish(epoch, start.elapsed().as_secs_f64());
        observer.on_epoch(&e);
        log.epochs.push(e);
    }
    Ok((p, log))
}

/// MAE training on a whole dataset with per-epoch reshuffled mini-batches.
pub fn train_mae_dataset(
    mut p: CorrNetParams,
    data: &TwoViewBatch,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(CorrNetParams, TrainLog)> {
    p.validate()?;
    let mut cfg = cfg.clone();
    cfg.mask = LossTermMask::reconstruction_only();
    let log = train_dataset_generic(&mut p, data, &cfg, &mae_schedule(), observer)?;
    Ok((p, log))
}

/// Splits a dataset into consecutive mini-batches (the last may be partial).
pub fn make_batches(data: &TwoViewBatch, batch_size: usize) -> Result<Vec<TwoViewBatch>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let n = data.len();
    Ok((0..n)
        .step_by(batch_size)
        .map(|s| {
            let e = (s + batch_size).min(n);
            TwoViewBatch {
                x: data.x.slice_rows(s, e),
                y: data.y.slice_rows(s, e),
            }
        })
        .collect())
}

/// Merges consecutive groups of `merge_factor` rows by elementwise maximum
/// (the union of binary bags); a trailing partial group is merged on its own.
pub fn merge_bow(batch: &TwoViewBatch, merge_factor: usize) -> Result<TwoViewBatch> {
    if merge_factor == 0 {
        return Err(Error::InvalidArgument("merge_factor must be >= 1".into()));
    }
    if merge_factor == 1 {
        return Ok(batch.clone());
    }
    let merge = |m: &DenseMatrix| {
        let groups = m.rows().div_ceil(merge_factor);
        let mut out = DenseMatrix::filled(groups, m.cols(), f64::NEG_INFINITY);
        for r in 0..m.rows() {
            let dst = out.row_mut(r / merge_factor);
            for (d, &v) in dst.iter_mut().zip(m.row(r)) {
                *d = d.max(v);
            }
        }
        out
    };
    Ok(TwoViewBatch {
        x: merge(&batch.x),
        y: merge(&batch.y),
    })
}
