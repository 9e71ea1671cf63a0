//! Flat `section.key=value` experiment configuration.
//!
//! Every key has a default; a config file overrides defaults and `--set`
//! overrides the file. Unknown keys are rejected so typos never silently fall
//! back to a default.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crlkit::training::{OptimizerKind, TrainConfig};
use crlkit::{Activation, LossTermMask, ReconLoss};

use crate::ConfigError;

const DEFAULTS: &[(&str, &str)] = &[
    ("output.dir", "runs/default"),
    ("data.kind", "mnist"),
    ("data.dir", "data/mnist"),
    ("data.n_train", "50000"),
    ("data.seed", "0"),
    ("data.n", "10000"),
    ("data.d1", "5"),
    ("data.d2", "5"),
    ("data.latent", "3"),
    ("data.noise", "0.5"),
    ("data.spelling_noise", "0.15"),
    ("model.kind", "corrnet"),
    ("model.k", "50"),
    ("model.hidden_act", "sigmoid"),
    ("model.output_act", "sigmoid"),
    ("model.loss", "squared"),
    ("model.layers", ""),
    ("model.freeze_lower", "false"),
    ("model.max_depth", "4"),
    ("model.ridge", "1e-4"),
    ("train.epochs", "15"),
    ("train.batch_size", "100"),
    ("train.lr", "0.001"),
    ("train.optimizer", "rmsprop"),
    ("train.rmsprop_decay", "0.9"),
    ("train.rmsprop_eps", "1e-6"),
    ("train.lambda", "2"),
    ("train.mask", "L1+L2+L3+L4"),
    ("train.seed", "0"),
    ("train.merge_factor", "1"),
    ("eval.folds", "5"),
    ("eval.seed", "0"),
    ("eval.l2", "1e-3"),
    ("eval.max_iter", "500"),
    ("eval.metrics", "correlation,mse,transfer"),
    (
        "ablate.masks",
        "L7+L8;L7+L8+L4;L1;L1+L4;L2+L3+L4;L1+L2+L3+L4",
    ),
    ("sweep.dims", "5,10,20,30,40,50,60,70,80"),
    ("sweep.models", "corrnet,mae,cca"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Mnist,
    Synth,
    Transliteration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    CorrNet,
    Mae,
    Cca,
    Deep,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::CorrNet => "corrnet",
            ModelKind::Mae => "mae",
            ModelKind::Cca => "cca",
            ModelKind::Deep => "deep",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "corrnet" => Ok(ModelKind::CorrNet),
            "mae" => Ok(ModelKind::Mae),
            "cca" => Ok(ModelKind::Cca),
            "deep" => Ok(ModelKind::Deep),
            _ => Err(format!(
                "unknown model kind `{s}` (expected corrnet, mae, cca or deep)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Correlation,
    Mse,
    Transfer,
}

#[derive(Clone, Debug)]
pub struct DataConfig {
    pub kind: DataKind,
    pub dir: PathBuf,
    pub n_train: usize,
    pub seed: u64,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub latent: usize,
    pub noise: f64,
    pub spelling_noise: f64,
}

#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub k: usize,
    pub hidden_act: Activation,
    pub output_act: Activation,
    pub loss: ReconLoss,
    /// Deep models: common-layer widths from the input side up.
    pub layers: Vec<usize>,
    pub freeze_lower: bool,
    pub max_depth: usize,
    pub ridge: f64,
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub l2: f64,
    pub max_iter: usize,
    pub metrics: Vec<Metric>,
}

/// A fully resolved experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablate_masks: Vec<LossTermMask>,
    pub sweep_dims: Vec<usize>,
    pub sweep_models: Vec<ModelKind>,
    raw: BTreeMap<String, String>,
}

fn parse_line(line: &str, origin: &str) -> Result<Option<(String, String)>, ConfigError> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("{origin}: expected key=value, got `{line}`")))?;
    let k = k.trim();
    if !DEFAULTS.iter().any(|(d, _)| *d == k) {
        return Err(ConfigError(format!("{origin}: unknown key `{k}`")));
    }
    Ok(Some((k.to_string(), v.trim().to_string())))
}

impl ExperimentConfig {
    /// Defaults, then `file`, then `overrides` (each `key=value`).
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut raw: BTreeMap<String, String> = DEFAULTS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                if let Some((k, v)) = parse_line(line, &format!("{}:{}", path.display(), i + 1))? {
                    raw.insert(k, v);
                }
            }
        }
        for o in overrides {
            match parse_line(o, "--set")? {
                Some((k, v)) => raw.insert(k, v),
                None => return Err(ConfigError(format!("--set: expected key=value, got `{o}`"))),
            };
        }
        Self::from_raw(raw)
    }

    fn from_raw(raw: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let r = Reader(&raw);
        let data = DataConfig {
            kind: match r.str("data.kind") {
                "mnist" => DataKind::Mnist,
                "synth" => DataKind::Synth,
                "transliteration" => DataKind::Transliteration,
                other => {
                    return Err(r.bad(
                        "data.kind",
                        other,
                        "expected mnist, synth or transliteration",
                    ))
                }
            },
            dir: PathBuf::from(r.str("data.dir")),
            n_train: r.parse("data.n_train")?,
            seed: r.parse("data.seed")?,
            n: r.parse("data.n")?,
            d1: r.parse("data.d1")?,
            d2: r.parse("data.d2")?,
            latent: r.parse("data.latent")?,
            noise: r.parse("data.noise")?,
            spelling_noise: r.parse("data.spelling_noise")?,
        };
        let model = ModelConfig {
            kind: r.parse("model.kind")?,
            k: r.parse("model.k")?,
            hidden_act: r.parse("model.hidden_act")?,
            output_act: r.parse("model.output_act")?,
            loss: r.parse("model.loss")?,
            layers: r.list("model.layers", ',')?,
            freeze_lower: r.parse("model.freeze_lower")?,
            max_depth: r.parse("model.max_depth")?,
            ridge: r.parse("model.ridge")?,
        };
        if model.k == 0 {
            return Err(r.bad("model.k", "0", "must be >= 1"));
        }
        if model.kind == ModelKind::Deep && model.layers.is_empty() {
            return Err(ConfigError(
                "model.kind=deep needs model.layers, e.g. 500,300,50".into(),
            ));
        }
        let lambda: f64 = r.parse("train.lambda")?;
        let mut mask: LossTermMask = r.parse("train.mask")?;
        mask.lambda = lambda;
        let train = TrainConfig {
            epochs: r.parse("train.epochs")?,
            batch_size: r.parse("train.batch_size")?,
            learning_rate: r.parse("train.lr")?,
            optimizer: r.parse::<OptimizerKind>("train.optimizer")?,
            rmsprop_decay: r.parse("train.rmsprop_decay")?,
            rmsprop_eps: r.parse("train.rmsprop_eps")?,
            lambda,
            mask,
            seed: r.parse("train.seed")?,
            merge_factor: r.parse("train.merge_factor")?,
        };
        train
            .validate()
            .map_err(|e| ConfigError(format!("train: {e}")))?;
        let metrics = r
            .str("eval.metrics")
            .split(',')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(|m| match m {
                "correlation" => Ok(Metric::Correlation),
                "mse" => Ok(Metric::Mse),
                "transfer" => Ok(Metric::Transfer),
                other => Err(r.bad(
                    "eval.metrics",
                    other,
                    "expected correlation, mse or transfer",
                )),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let eval = EvalConfig {
            folds: r.parse("eval.folds")?,
            seed: r.parse("eval.seed")?,
            l2: r.parse("eval.l2")?,
            max_iter: r.parse("eval.max_iter")?,
            metrics,
        };
        let ablate_masks = r
            .str("ablate.masks")
            .split(';')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(|m| {
                let mut mask: LossTermMask = m
                    .parse()
                    .map_err(|e| r.bad("ablate.masks", m, &format!("{e}")))?;
                mask.lambda = lambda;
                Ok(mask)
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let sweep_models = r
            .str("sweep.models")
            .split(',')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(|m| {
                m.parse::<ModelKind>()
                    .map_err(|e| r.bad("sweep.models", m, &e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if sweep_models.contains(&ModelKind::Deep) {
            return Err(r.bad("sweep.models", "deep", "sweeps cover corrnet, mae and cca"));
        }
        Ok(Self {
            output_dir: PathBuf::from(r.str("output.dir")),
            data,
            model,
            train,
            eval,
            ablate_masks,
            sweep_dims: r.list("sweep.dims", ',')?,
            sweep_models,
            raw,
        })
    }

    /// Every key with its effective value, sorted; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.raw {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

struct Reader<'a>(&'a BTreeMap<String, String>);

impl Reader<'_> {
    fn str(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or_default()
    }

    fn bad(&self, key: &str, value: &str, why: &str) -> ConfigError {
        ConfigError(format!("{key}={value}: {why}"))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.str(key);
        v.parse()
            .map_err(|e: T::Err| self.bad(key, v, &e.to_string()))
    }

    fn list<T: FromStr>(&self, key: &str, sep: char) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.str(key)
            .split(sep)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e: T::Err| self.bad(key, s, &e.to_string()))
            })
            .collect()
    }
}
