//! Deep CorrNets built by repeatedly stacking a fresh common layer on top of a
//! trained one.
//!
//! Stacking splits the current top's shared layer into one layer per view,
//! `x -> f(W x + b)` and `y -> f(V y + b)` (the bias is copied into both), and
//! puts a new CorrNet on the two pathway outputs. Reconstruction always targets
//! the raw inputs: the new top decodes back to the pathway widths and a fresh
//! decoder layer of mirrored shape continues down to the level below.

use std::fs;
use std::path::Path;

use crate::checkpoint::{read_corrnet_body, write_corrnet_body, ContainerKind, Reader, Writer};
use crate::error::{dim_err, Error, Result};
use crate::model::{CorrNetParams, Layer, TwoViewBatch, TwoViewEncoder, ViewTag};
use crate::numerics::{DenseMatrix, Rng};
use crate::training::{train_dataset_generic, TrainConfig, TrainLog, TrainObserver, Trainable};

/// Stacking stops once this many hidden layers exist unless a larger bound is given.
pub const DEFAULT_MAX_DEPTH: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct DeepCorrNet {
    /// x pathway below the top, input side first.
    pub x_stack: Vec<Layer>,
    pub y_stack: Vec<Layer>,
    pub top: CorrNetParams,
    /// Applied after the top's x decoder, ending at the raw x width.
    pub x_decoder: Vec<Layer>,
    pub y_decoder: Vec<Layer>,
    /// Keep pathway layers fixed during training.
    pub freeze_lower: bool,
}

impl DeepCorrNet {
    /// A depth-one network equivalent to `shallow`.
    pub fn from_shallow(shallow: CorrNetParams) -> Self {
        Self {
            x_stack: Vec::new(),
            y_stack: Vec::new(),
            top: shallow,
            x_decoder: Vec::new(),
            y_decoder: Vec::new(),
            freeze_lower: false,
        }
    }

    /// Hidden widths from the input side up, e.g. `[500, 300, 50]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.x_stack
            .iter()
            .map(Layer::output_dim)
            .chain(std::iter::once(self.top.hidden_dim()))
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.x_stack.len() + 1
    }

    pub fn x_dim(&self) -> usize {
        self.x_stack
            .first()
            .map_or(self.top.x_dim(), Layer::input_dim)
    }

    pub fn y_dim(&self) -> usize {
        self.y_stack
            .first()
            .map_or(self.top.y_dim(), Layer::input_dim)
    }

    /// Adds a common layer of width `new_k`, bounded by [`DEFAULT_MAX_DEPTH`].
    pub fn stack(self, new_k: usize, rng: &mut Rng) -> Result<Self> {
        self.stack_bounded(new_k, DEFAULT_MAX_DEPTH, rng)
    }

    pub fn stack_bounded(self, new_k: usize, max_depth: usize, rng: &mut Rng) -> Result<Self> {
        if new_k == 0 {
            return Err(Error::InvalidArgument("new_k must be >= 1".into()));
        }
        if self.depth() + 1 > max_depth {
            return Err(Error::InvalidArgument(format!(
                "stacking would exceed the maximum depth {max_depth}"
            )));
        }
        let Self {
            mut x_stack,
            mut y_stack,
            top,
            mut x_decoder,
            mut y_decoder,
            freeze_lower,
        } = self;
        let k = top.hidden_dim();
        let f = top.hidden_act;
        x_stack.push(Layer::new(top.enc_x.clone(), top.enc_bias.clone(), f)?);
        y_stack.push(Layer::new(top.enc_y.clone(), top.enc_bias.clone(), f)?);
        x_decoder.insert(0, Layer::random(k, top.x_dim(), top.output_act, rng));
        y_decoder.insert(0, Layer::random(k, top.y_dim(), top.output_act, rng));
        let new_top = CorrNetParams::new(k, k, new_k, f, f, top.recon_loss, rng)?;
        let net = Self {
            x_stack,
            y_stack,
            top: new_top,
            x_decoder,
            y_decoder,
            freeze_lower,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        self.top.validate()?;
        check_chain("x pathway", &self.x_stack, self.top.x_dim(), false)?;
        check_chain("y pathway", &self.y_stack, self.top.y_dim(), false)?;
        check_chain("x decoder", &self.x_decoder, self.top.x_dim(), true)?;
        check_chain("y decoder", &self.y_decoder, self.top.y_dim(), true)?;
        if self.x_stack.len() != self.x_decoder.len() || self.y_stack.len() != self.y_decoder.len()
        {
            return Err(Error::InvalidArgument(
                "each pathway layer needs exactly one decoder layer".into(),
            ));
        }
        if self
            .x_decoder
            .last()
            .is_some_and(|l| l.output_dim() != self.x_dim())
            || self
                .y_decoder
                .last()
                .is_some_and(|l| l.output_dim() != self.y_dim())
        {
            return dim_err("DeepCorrNet", "decoder does not end at the raw input width");
        }
        Ok(())
    }

    fn pathway(&self, view: ViewTag, data: &DenseMatrix) -> Result<DenseMatrix> {
        let (stack, want) = match view {
            ViewTag::X => (&self.x_stack, self.x_dim()),
            ViewTag::Y => (&self.y_stack, self.y_dim()),
        };
        if data.cols() != want {
            return dim_err(
                "encode_deep",
                format!(
                    "{view} data has {} columns, model expects {want}",
                    data.cols()
                ),
            );
        }
        let mut h = data.clone();
        for l in stack {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    /// Pathway layers, then the top's single-view encoder.
    pub fn encode(&self, view: ViewTag, data: &DenseMatrix) -> Result<DenseMatrix> {
        let h = self.pathway(view, data)?;
        match view {
            ViewTag::X => self.top.encode_x(&h),
            ViewTag::Y => self.top.encode_y(&h),
        }
    }

    pub fn encode_both(&self, x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
        self.top
            .encode_both(&self.pathway(ViewTag::X, x)?, &self.pathway(ViewTag::Y, y)?)
    }

    /// Reconstructs raw views from top-level codes.
    pub fn decode(&self, h: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        let (mut xr, mut yr) = self.top.decode(h)?;
        for l in &self.x_decoder {
            xr = l.forward(&xr)?;
        }
        for l in &self.y_decoder {
            yr = l.forward(&yr)?;
        }
        Ok((xr, yr))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(ContainerKind::DeepCorrNet);
        w.u32(u32::from(self.freeze_lower));
        for chain in [&self.x_stack, &self.y_stack] {
            w.usize(chain.len());
            chain.iter().for_each(|l| w.layer(l));
        }
        write_corrnet_body(&mut w, &self.top);
        for chain in [&self.x_decoder, &self.y_decoder] {
            w.usize(chain.len());
            chain.iter().for_each(|l| w.layer(l));
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, ContainerKind::DeepCorrNet)?;
        let freeze_lower = match r.u32()? {
            0 => false,
            1 => true,
            v => {
                return Err(Error::Format(format!(
                    "freeze flag must be 0 or 1, got {v}"
                )))
            }
        };
        let chain = |r: &mut Reader<'_>| -> Result<Vec<Layer>> {
            let n = r.usize()?;
            if n >= DEFAULT_MAX_DEPTH * 16 {
                return Err(Error::Format(format!("implausible layer count {n}")));
            }
            (0..n).map(|_| r.layer()).collect()
        };
        let x_stack = chain(&mut r)?;
        let y_stack = chain(&mut r)?;
        let top = read_corrnet_body(&mut r)?;
        let x_decoder = chain(&mut r)?;
        let y_decoder = chain(&mut r)?;
        r.finish()?;
        let net = Self {
            x_stack,
            y_stack,
            top,
            x_decoder,
            y_decoder,
            freeze_lower,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn check_chain(name: &'static str, chain: &[Layer], top_dim: usize, decoder: bool) -> Result<()> {
    for w in chain.windows(2) {
        if w[0].output_dim() != w[1].input_dim() {
            return dim_err(
                name,
                format!(
                    "layer widths {} and {} do not chain",
                    w[0].output_dim(),
                    w[1].input_dim()
                ),
            );
        }
    }
    let touching = if decoder {
        chain.first().map(Layer::input_dim)
    } else {
        chain.last().map(Layer::output_dim)
    };
    match touching {
        Some(d) if d != top_dim => {
            dim_err(name, format!("width {d} does not meet the top's {top_dim}"))
        }
        _ => Ok(()),
    }
}

impl Trainable for DeepCorrNet {
    fn network(&self) -> crate::model::Network<'_> {
        crate::model::Network {
            x_path: &self.x_stack,
            y_path: &self.y_stack,
            top: &self.top,
            x_dec: &self.x_decoder,
            y_dec: &self.y_decoder,
        }
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        fn layers<'a>(out: &mut Vec<&'a mut [f64]>, ls: &'a mut [Layer]) {
            for l in ls {
                out.push(l.weight.as_mut_slice());
                out.push(l.bias.as_mut_slice());
            }
        }
        let mut out = Vec::new();
        layers(&mut out, &mut self.x_stack);
        layers(&mut out, &mut self.y_stack);
        out.extend(self.top.blocks_mut());
        layers(&mut out, &mut self.x_decoder);
        layers(&mut out, &mut self.y_decoder);
        out
    }

    fn frozen_blocks(&self) -> Vec<bool> {
        if !self.freeze_lower {
            return Vec::new();
        }
        let lower = 2 * (self.x_stack.len() + self.y_stack.len());
        let rest = 6 + 2 * (self.x_decoder.len() + self.y_decoder.len());
        std::iter::repeat_n(true, lower)
            .chain(std::iter::repeat_n(false, rest))
            .collect()
    }
}

/// Trains every layer jointly on the configured objective at the top common
/// layer, with raw-input reconstruction targets.
pub fn train_deep(
    mut net: DeepCorrNet,
    data: &TwoViewBatch,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(DeepCorrNet, TrainLog)> {
    net.validate()?;
    let log = train_dataset_generic(&mut net, data, cfg, &[cfg.effective_mask()], observer)?;
    Ok((net, log))
}

pub fn encode_deep(net: &DeepCorrNet, view: ViewTag, data: &DenseMatrix) -> Result<DenseMatrix> {
    net.encode(view, data)
}

impl TwoViewEncoder for DeepCorrNet {
    fn code_dim(&self) -> usize {
        self.top.hidden_dim()
    }

    fn view_dim(&self, view: ViewTag) -> usize {
        match view {
            ViewTag::X => self.x_dim(),
            ViewTag::Y => self.y_dim(),
        }
    }

    fn encode_view(&self, view: ViewTag, data: &DenseMatrix) -> Result<DenseMatrix> {
        self.encode(view, data)
    }
}
