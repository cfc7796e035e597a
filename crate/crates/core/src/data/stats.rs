//! Descriptive statistics of a catalog (cf. the dataset statistics table).

use serde::Serialize;

use super::catalog::ItemCatalog;
use super::interactions::InteractionMatrix;

/// Gini index of a vector of non-negative counts: mean absolute difference
/// over all ordered pairs divided by twice the mean.
pub fn gini(counts: &[f64]) -> f64 {
    let n = counts.len();
    let total: f64 = counts.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| (k as f64 + 1.0) * x)
        .sum();
    let nf = n as f64;
    2.0 * weighted / (nf * total) - (nf + 1.0) / nf
}

/// Positives per class over labeled items.
pub fn label_counts(catalog: &ItemCatalog) -> Vec<usize> {
    let mut counts = vec![0; catalog.num_classes()];
    for n in catalog.records().iter().flat_map(|r| r.positives()) {
        counts[n] += 1;
    }
    counts
}

/// Mean number of positive labels per labeled item.
pub fn avg_positive_labels(catalog: &ItemCatalog) -> f64 {
    let labeled = catalog.num_labeled();
    if labeled == 0 {
        return 0.0;
    }
    let positives: usize = label_counts(catalog).iter().sum();
    positives as f64 / labeled as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub images: usize,
    pub interactions: usize,
    pub users: usize,
    pub sparsity: f64,
    pub labels: usize,
    pub avg_pos_labels: f64,
    pub gini: f64,
}

pub fn dataset_stats(catalog: &ItemCatalog, matrix: &InteractionMatrix) -> DatasetStats {
    let counts: Vec<f64> = label_counts(catalog).into_iter().map(|c| c as f64).collect();
    DatasetStats {
        images: catalog.len(),
        interactions: matrix.num_entries(),
        users: matrix.num_users(),
        sparsity: matrix.sparsity(),
        labels: catalog.num_classes(),
        avg_pos_labels: avg_positive_labels(catalog),
        gini: gini(&counts),
    }
}
