//! Metrics and evaluation protocols.

mod classifier;
mod metrics;
mod protocols;
mod report;

pub use classifier::{fit_classifier, fit_classifier_with, ClassifierConfig, LinearClassifier};
pub use metrics::{
    column_correlations, correlation_scores, f1, match_by_correlation, reconstruct_from,
    reconstruction_mse, sum_correlation, tune_threshold, Autoencoder, Threshold,
};
pub use protocols::{
    ablation_grid, cross_view_accuracy, fold_assignment, single_view_accuracy, thread_count,
    transfer_accuracy, transfer_both, tuned_matching, AblationRow, MatchOutcome, TransferProtocol,
    TransferScores, THREADS_ENV,
};
pub use report::{encode_pgm, write_pgm, EvalReport};

#[cfg(test)]
mod tests;
