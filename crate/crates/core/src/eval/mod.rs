//! Evaluation: ranking metrics, per-user AUC, bootstrap intervals, paired
//! tests, the label-ratio sweep and report rendering.

pub mod ap;
pub mod auc;
pub mod bootstrap;
pub mod report;
pub mod sweep;
pub mod ttest;

pub use ap::{average_precision, mean_average_precision, MapResult};
pub use auc::{evaluate_auc, pairwise_auc, per_user_auc};
pub use bootstrap::{bootstrap_ci, ConfidenceInterval};
pub use report::{render_report, Metrics, MetricsReport};
pub use sweep::{run_label_ratio_sweep, SweepOutcome};
pub use ttest::{paired_ttest, PairedTTest};
