use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub mean_diff: f64,
    /// `None` when the differences have zero variance.
    pub t: Option<f64>,
    pub df: usize,
    /// Two-sided p-value.
    pub p: f64,
}

/// Two-sided paired t-test on `a - b`.
///
/// Zero-variance differences give `p = 1` when the mean difference is zero
/// and `p = 0` otherwise.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired t-test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid("paired t-test needs at least 2 pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = diffs.len() - 1;
    if var <= f64::EPSILON * f64::EPSILON * mean.abs().max(1.0) {
        let p = if mean == 0.0 { 1.0 } else { 0.0 };
        log::debug!("paired t-test: zero-variance differences, p = {p} by convention");
        return Ok(PairedTTest {
            mean_diff: mean,
            t: None,
            df,
            p,
        });
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(PairedTTest {
        mean_diff: mean,
        t: Some(t),
        df,
        p,
    })
}
