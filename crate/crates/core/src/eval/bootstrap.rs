use serde::{Deserialize, Serialize};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Linear-interpolation percentile (`q` in [0, 1]) of ascending `sorted`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Metric values on `resamples` bootstrap resamples of `records` (items drawn
/// with replacement). Resamples on which the metric is undefined are dropped.
pub fn bootstrap_replicates<T>(
    records: &[T],
    metric: impl Fn(&[&T]) -> Option<f64>,
    resamples: usize,
    seed: u64,
) -> Vec<f64> {
    let mut r = rng::stream(seed, "bootstrap");
    let n = records.len();
    let mut values = Vec::with_capacity(resamples);
    let mut sample: Vec<&T> = Vec::with_capacity(n);
    for _ in 0..resamples {
        sample.clear();
        sample.extend((0..n).map(|_| &records[r.random_range(0..n)]));
        if let Some(v) = metric(&sample) {
            values.push(v);
        }
    }
    values
}

/// Percentile bootstrap interval of `metric` at confidence `level`.
pub fn bootstrap_ci<T>(
    records: &[T],
    metric: impl Fn(&[&T]) -> Option<f64>,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceInterval> {
    if resamples < 100 {
        return Err(Error::invalid(format!("bootstrap needs >= 100 resamples, got {resamples}")));
    }
    if records.is_empty() {
        return Err(Error::invalid("bootstrap over an empty record set"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} not in (0, 1)")));
    }
    let mut values = bootstrap_replicates(records, metric, resamples, seed);
    if values.is_empty() {
        return Err(Error::invalid("metric undefined on every bootstrap resample"));
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(ConfidenceInterval {
        level,
        lo: percentile_sorted(&values, tail),
        hi: percentile_sorted(&values, 1.0 - tail),
        resamples,
    })
}

/// Bootstrap interval of a plain mean.
pub fn mean_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Result<ConfidenceInterval> {
    bootstrap_ci(
        values,
        |s| Some(s.iter().copied().sum::<f64>() / s.len() as f64),
        resamples,
        level,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(s: &[&f64]) -> Option<f64> {
        Some(s.iter().copied().sum::<f64>() / s.len() as f64)
    }

    #[test]
    fn single_distinct_record_gives_zero_width() {
        let ci = bootstrap_ci(&[0.7; 12], mean, 200, 0.95, 1).unwrap();
        assert!((ci.lo - 0.7).abs() < 1e-12 && (ci.hi - 0.7).abs() < 1e-12);
        assert_eq!(ci.lo, ci.hi);
    }

    #[test]
    fn endpoints_are_replicate_percentiles() {
        let data: Vec<f64> = (0..50).map(|k| ((k * 37) % 50) as f64 / 7.0).collect();
        let ci = bootstrap_ci(&data, mean, 1000, 0.95, 3).unwrap();
        let mut reps = bootstrap_replicates(&data, mean, 1000, 3);
        reps.sort_by(f64::total_cmp);
        // independent percentile: numpy-style linear interpolation written out
        let pct = |q: f64| {
            let h = (reps.len() as f64 - 1.0) * q;
            let f = h.floor();
            reps[f as usize] + (h - f) * (reps[h.ceil() as usize] - reps[f as usize])
        };
        assert!((ci.lo - pct(0.025)).abs() < 1e-12);
        assert!((ci.hi - pct(0.975)).abs() < 1e-12);
        let point = mean(&data.iter().collect::<Vec<_>>()).unwrap();
        assert!(ci.contains(point));
    }

    #[test]
    fn rejects_small_b_and_empty_records() {
        assert!(bootstrap_ci(&[1.0], mean, 99, 0.95, 0).is_err());
        assert!(bootstrap_ci::<f64>(&[], mean, 100, 0.95, 0).is_err());
    }
}
