use anyhow::{Context, Result};
use crlkit::datasets::{
    mnist_views, synth_shared_latent, synth_transliteration, TransliterationConfig,
    TransliterationData, ViewedDataset,
};

use crate::config::{DataConfig, DataKind};

pub struct Splits {
    pub train: ViewedDataset,
    pub test: ViewedDataset,
    /// Vocabularies and word pairs when the data is the name-matching task.
    pub words: Option<TransliterationData>,
}

pub fn load(cfg: &DataConfig) -> Result<Splits> {
    match cfg.kind {
        DataKind::Mnist => {
            let (train, test) = mnist_views(&cfg.dir, cfg.n_train, cfg.seed)
                .with_context(|| format!("loading MNIST from {}", cfg.dir.display()))?;
            Ok(Splits {
                train,
                test,
                words: None,
            })
        }
        DataKind::Synth => {
            // one draw so both halves share the generating loadings
            let (all, _) =
                synth_shared_latent(2 * cfg.n, cfg.d1, cfg.d2, cfg.latent, cfg.noise, cfg.seed)?;
            let train = all.select(&(0..cfg.n).collect::<Vec<_>>());
            let test = all.select(&(cfg.n..2 * cfg.n).collect::<Vec<_>>());
            Ok(Splits {
                train,
                test,
                words: None,
            })
        }
        DataKind::Transliteration => {
            let t = synth_transliteration(&TransliterationConfig {
                noise: cfg.spelling_noise,
                seed: cfg.seed,
                ..Default::default()
            })?;
            Ok(Splits {
                train: t.train.clone(),
                test: t.test.clone(),
                words: Some(t),
            })
        }
    }
}
