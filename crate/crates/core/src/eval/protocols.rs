use rayon::prelude::*;

use super::classifier::{fit_classifier_with, ClassifierConfig};
use super::metrics::{correlation_scores, f1, tune_threshold, Threshold};
use crate::datasets::ViewedDataset;
use crate::error::{dim_err, Error, Result};
use crate::model::{CorrNetParams, LossTermMask, TwoViewBatch, TwoViewEncoder, ViewTag};
use crate::numerics::{DenseMatrix, Rng};
use crate::training::{train_dataset, TrainConfig};

/// Environment variable capping the worker threads of parallel protocols.
pub const THREADS_ENV: &str = "CRLKIT_THREADS";

/// Worker count from `CRLKIT_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Fold protocol for transfer accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferProtocol {
    pub folds: usize,
    /// Seeds the fold assignment.
    pub seed: u64,
    pub classifier: ClassifierConfig,
}

impl Default for TransferProtocol {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Seeded assignment of `n` rows to `folds` near-equal folds.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if n < folds {
        return Err(Error::InvalidArgument(format!(
            "{n} rows cannot fill {folds} folds"
        )));
    }
    let perm = Rng::seed_from(seed).permutation(n);
    let mut fold = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold[i] = pos % folds;
    }
    Ok(fold)
}

/// Cross-validated accuracy (percent) where the classifier is fit on
/// `fit_repr` rows outside each fold and scored on `score_repr` rows inside it.
/// Passing the same matrix twice gives ordinary cross-validation.
pub fn cross_view_accuracy(
    fit_repr: &DenseMatrix,
    score_repr: &DenseMatrix,
    labels: &[usize],
    protocol: &TransferProtocol,
) -> Result<f64> {
    if fit_repr.rows() != score_repr.rows() || fit_repr.rows() != labels.len() {
        return dim_err(
            "cross_view_accuracy",
            format!(
                "{} / {} rows for {} labels",
                fit_repr.rows(),
                score_repr.rows(),
                labels.len()
            ),
        );
    }
    if fit_repr.cols() != score_repr.cols() {
        return dim_err(
            "cross_view_accuracy",
            format!("{} vs {} features", fit_repr.cols(), score_repr.cols()),
        );
    }
    let fold = fold_assignment(labels.len(), protocol.folds, protocol.seed)?;
    let mut total = 0.0;
    for f in 0..protocol.folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] == f).collect();
        let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let test_labels: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        let clf = fit_classifier_with(
            &fit_repr.select_rows(&train),
            &train_labels,
            &protocol.classifier,
            None,
        )?;
        total += clf.accuracy(&score_repr.select_rows(&test), &test_labels)?;
    }
    Ok(total / protocol.folds as f64)
}

/// Transfer accuracy from view `from` to the other view: the classifier is
/// trained on `from`-view codes and tested on the other view's codes of
/// held-out folds of `data`.
pub fn transfer_accuracy(
    model: &impl TwoViewEncoder,
    data: &ViewedDataset,
    from: ViewTag,
    protocol: &TransferProtocol,
) -> Result<f64> {
    let (src, dst) = match from {
        ViewTag::X => (&data.x, &data.y),
        ViewTag::Y => (&data.y, &data.x),
    };
    let hs = model.encode_view(from, src)?;
    let hd = model.encode_view(from.other(), dst)?;
    cross_view_accuracy(&hs, &hd, data.labels()?, protocol)
}

/// Left-to-right and right-to-left transfer accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferScores {
    pub l2r: f64,
    pub r2l: f64,
}

pub fn transfer_both(
    model: &impl TwoViewEncoder,
    data: &ViewedDataset,
    protocol: &TransferProtocol,
) -> Result<TransferScores> {
    let hx = model.encode_view(ViewTag::X, &data.x)?;
    let hy = model.encode_view(ViewTag::Y, &data.y)?;
    let labels = data.labels()?;
    Ok(TransferScores {
        l2r: cross_view_accuracy(&hx, &hy, labels, protocol)?,
        r2l: cross_view_accuracy(&hy, &hx, labels, protocol)?,
    })
}

/// Same-view accuracy on a fixed representation of each view (e.g. raw pixels):
/// the reference an ideal transfer would match.
pub fn single_view_accuracy(
    data: &ViewedDataset,
    protocol: &TransferProtocol,
) -> Result<TransferScores> {
    let labels = data.labels()?;
    Ok(TransferScores {
        l2r: cross_view_accuracy(&data.x, &data.x, labels, protocol)?,
        r2l: cross_view_accuracy(&data.y, &data.y, labels, protocol)?,
    })
}

/// One ablation result.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub mask: LossTermMask,
    pub l2r: f64,
    pub r2l: f64,
    pub sum_correlation: f64,
}

/// Trains one model per mask from the same initialization, seed and config,
/// then measures transfer on `test`. Masks run in parallel on up to
/// [`thread_count`] threads; results keep the input order.
pub fn ablation_grid(
    init: &CorrNetParams,
    train: &TwoViewBatch,
    test: &ViewedDataset,
    masks: &[LossTermMask],
    cfg: &TrainConfig,
    protocol: &TransferProtocol,
) -> Result<Vec<AblationRow>> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument(
            "ablation needs at least one mask".into(),
        ));
    }
    let run = |mask: &LossTermMask| -> Result<AblationRow> {
        let cfg = TrainConfig {
            mask: *mask,
            lambda: mask.lambda,
            ..cfg.clone()
        };
        let (p, _) = train_dataset(init.clone(), train, &cfg, &mut ())?;
        let t = transfer_both(&p, test, protocol)?;
        let hx = p.encode_x(&test.x)?;
        let hy = p.encode_y(&test.y)?;
        Ok(AblationRow {
            mask: *mask,
            l2r: t.l2r,
            r2l: t.r2l,
            sum_correlation: super::sum_correlation(&hx, &hy)?,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count().min(masks.len()))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| masks.par_iter().map(run).collect())
}

/// Threshold tuned on one labelled pair set and applied to another.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchOutcome {
    pub tuned: Threshold,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores pairs by code correlation, tunes the threshold on `tune` and
/// reports precision/recall/F1 on `test` (labels: 1 = equivalent pair).
pub fn tuned_matching(
    model: &impl TwoViewEncoder,
    tune: &ViewedDataset,
    test: &ViewedDataset,
) -> Result<MatchOutcome> {
    let truth = |d: &ViewedDataset| -> Result<Vec<bool>> {
        Ok(d.labels()?.iter().map(|&l| l == 1).collect())
    };
    let tune_scores = correlation_scores(model, &tune.x, &tune.y)?;
    let tuned = tune_threshold(
        &tune_scores
            .into_iter()
            .zip(truth(tune)?)
            .collect::<Vec<_>>(),
    )?;
    let test_scores = correlation_scores(model, &test.x, &test.y)?;
    let pred: Vec<bool> = test_scores.iter().map(|&s| s > tuned.threshold).collect();
    let (precision, recall, f) = f1(&pred, &truth(test)?)?;
    Ok(MatchOutcome {
        tuned,
        precision,
        recall,
        f1: f,
    })
}
