use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranking of indices by descending score; equal scores keep index order.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Mean of precision@k over the ranks k holding a positive.
///
/// Returns `None` when there are no positives.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len(), "scores and labels differ in length");
    let total = positives.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in rank_desc(scores).iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// Per-class AP and their mean over classes with at least one positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    /// `None` for classes without a positive among the evaluated items.
    pub per_class: Vec<Option<f64>>,
    pub map: f64,
    pub skipped: Vec<usize>,
}

/// `scores` and `labels` are `[items, classes]`; `class_mask[n] == false`
/// excludes class `n` regardless of its positives.
pub fn mean_average_precision(
    scores: &Array2<f64>,
    labels: &Array2<bool>,
    class_mask: Option<&[bool]>,
) -> Result<MapResult> {
    if scores.dim() != labels.dim() {
        return Err(Error::invalid("score and label matrices differ in shape"));
    }
    let n_classes = scores.ncols();
    let mut per_class = Vec::with_capacity(n_classes);
    let mut skipped = Vec::new();
    for n in 0..n_classes {
        let included = class_mask.is_none_or(|m| m[n]);
        let s = scores.column(n).to_vec();
        let y = labels.column(n).to_vec();
        let ap = if included { average_precision(&s, &y) } else { None };
        if ap.is_none() {
            skipped.push(n);
        }
        per_class.push(ap);
    }
    let aps: Vec<f64> = per_class.iter().flatten().copied().collect();
    if aps.is_empty() {
        return Err(Error::invalid("no class has a positive among the evaluated items"));
    }
    Ok(MapResult {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        per_class,
        skipped,
    })
}
