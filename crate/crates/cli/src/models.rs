use std::path::Path;

use anyhow::{Context, Result};
use crlkit::baselines::{fit_cca, CcaModel};
use crlkit::checkpoint::{corrnet_from_bytes, corrnet_to_bytes, peek_kind, ContainerKind};
use crlkit::datasets::ViewedDataset;
use crlkit::deep::{train_deep, DeepCorrNet};
use crlkit::eval::Autoencoder;
use crlkit::model::TwoViewEncoder;
use crlkit::training::{train_dataset, train_mae_dataset, EpochLog, TrainLog, TrainObserver};
use crlkit::{CorrNetParams, DenseMatrix, Rng, ViewTag};
use log::info;

use crate::config::{ExperimentConfig, ModelKind};

/// Any model a checkpoint can hold.
pub enum AnyModel {
    CorrNet(CorrNetParams),
    Deep(DeepCorrNet),
    Cca(CcaModel),
}

impl AnyModel {
    pub fn from_bytes(bytes: &[u8]) -> crlkit::Result<Self> {
        Ok(match peek_kind(bytes)? {
            ContainerKind::CorrNet => AnyModel::CorrNet(corrnet_from_bytes(bytes)?),
            ContainerKind::DeepCorrNet => AnyModel::Deep(DeepCorrNet::from_bytes(bytes)?),
            ContainerKind::Cca => AnyModel::Cca(CcaModel::from_bytes(bytes)?),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading checkpoint {}", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("decoding checkpoint {}", path.display()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            AnyModel::CorrNet(p) => corrnet_to_bytes(p),
            AnyModel::Deep(d) => d.to_bytes(),
            AnyModel::Cca(c) => c.to_bytes(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            AnyModel::CorrNet(p) => {
                format!("corrnet {}-{}-{}", p.x_dim(), p.hidden_dim(), p.y_dim())
            }
            AnyModel::Deep(d) => {
                let sizes: Vec<String> = d.layer_sizes().iter().map(usize::to_string).collect();
                format!("deep corrnet {}", sizes.join("-"))
            }
            AnyModel::Cca(c) => format!("cca k={}", c.k()),
        }
    }

    pub fn has_decoder(&self) -> bool {
        !matches!(self, AnyModel::Cca(_))
    }
}

impl TwoViewEncoder for AnyModel {
    fn code_dim(&self) -> usize {
        match self {
            AnyModel::CorrNet(p) => p.code_dim(),
            AnyModel::Deep(d) => d.code_dim(),
            AnyModel::Cca(c) => c.code_dim(),
        }
    }

    fn view_dim(&self, view: ViewTag) -> usize {
        match self {
            AnyModel::CorrNet(p) => p.view_dim(view),
            AnyModel::Deep(d) => d.view_dim(view),
            AnyModel::Cca(c) => c.view_dim(view),
        }
    }

    fn encode_view(&self, view: ViewTag, data: &DenseMatrix) -> crlkit::Result<DenseMatrix> {
        match self {
            AnyModel::CorrNet(p) => p.encode_view(view, data),
            AnyModel::Deep(d) => d.encode_view(view, data),
            AnyModel::Cca(c) => c.encode_view(view, data),
        }
    }
}

impl Autoencoder for AnyModel {
    fn decode_code(&self, h: &DenseMatrix) -> crlkit::Result<(DenseMatrix, DenseMatrix)> {
        match self {
            AnyModel::CorrNet(p) => p.decode_code(h),
            AnyModel::Deep(d) => d.decode_code(h),
            AnyModel::Cca(_) => Err(crlkit::Error::InvalidArgument(
                "a CCA model has no decoder".into(),
            )),
        }
    }
}

/// Logs each epoch at info level.
pub struct LogObserver {
    pub label: String,
}

impl TrainObserver for LogObserver {
    fn on_epoch(&mut self, e: &EpochLog) {
        match e.corr_value {
            Some(c) => info!(
                "{} epoch {} loss {:.4} corr {:.3} ({:.1}s)",
                self.label, e.epoch, e.total, c, e.seconds
            ),
            None => info!(
                "{} epoch {} loss {:.4} ({:.1}s)",
                self.label, e.epoch, e.total, e.seconds
            ),
        }
    }
}

/// Trains a model of `kind` with code width `k` on `data`; the initialization
/// is drawn from `train.seed`.
pub fn train_model(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    k: usize,
    data: &ViewedDataset,
) -> Result<(AnyModel, TrainLog)> {
    let m = &cfg.model;
    let mut rng = Rng::seed_from(cfg.train.seed);
    let batch = data.to_batch();
    let (d1, d2) = (data.x.cols(), data.y.cols());
    let mut obs = LogObserver {
        label: kind.to_string(),
    };
    match kind {
        ModelKind::CorrNet | ModelKind::Mae => {
            let init = CorrNetParams::new(d1, d2, k, m.hidden_act, m.output_act, m.loss, &mut rng)?;
            let (p, log) = if kind == ModelKind::Mae {
                train_mae_dataset(init, &batch, &cfg.train, &mut obs)?
            } else {
                train_dataset(init, &batch, &cfg.train, &mut obs)?
            };
            Ok((AnyModel::CorrNet(p), log))
        }
        ModelKind::Cca => Ok((
            AnyModel::Cca(fit_cca(&data.x, &data.y, k, m.ridge)?),
            TrainLog::default(),
        )),
        ModelKind::Deep => {
            let (&first, rest) = m.layers.split_first().context("model.layers is empty")?;
            let init =
                CorrNetParams::new(d1, d2, first, m.hidden_act, m.output_act, m.loss, &mut rng)?;
            let (p, mut log) = train_dataset(init, &batch, &cfg.train, &mut obs)?;
            let mut net = DeepCorrNet::from_shallow(p);
            net.freeze_lower = m.freeze_lower;
            for &width in rest {
                net = net.stack_bounded(width, m.max_depth, &mut rng)?;
                obs.label = format!("deep depth {}", net.depth());
                let (trained, stage) = train_deep(net, &batch, &cfg.train, &mut obs)?;
                net = trained;
                let offset = log.epochs.len();
                log.epochs.extend(stage.epochs.into_iter().map(|mut e| {
                    e.epoch += offset;
                    e
                }));
            }
            Ok((AnyModel::Deep(net), log))
        }
    }
}
