//! Label-paucity sweep: the same comparison repeated as train labels are
//! removed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::report::{relative_improvement, MetricsReport};
use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub ratio: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SweepOutcome {
    pub reports: Vec<MetricsReport>,
    /// The run that aborted the sweep, if any.
    pub failure: Option<SweepFailure>,
}

impl SweepOutcome {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// Mean over seeds of the relative mAP improvement of `method` over
    /// `baseline`, per label ratio.
    pub fn relative_improvements(&self, method: &str, baseline: &str) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in self.reports.iter().filter(|r| r.method == method) {
            let Some(ratio) = r.metrics.label_ratio else { continue };
            let base = self.reports.iter().find(|b| {
                b.method == baseline && b.seed == r.seed && b.metrics.label_ratio == Some(ratio)
            });
            if let Some(b) = base {
                let e = acc.entry(ratio.to_string()).or_default();
                e.0 += relative_improvement(r.metrics.map, b.metrics.map);
                e.1 += 1;
            }
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    /// Mean mAP of `method` at `ratio` over seeds.
    pub fn mean_map(&self, method: &str, ratio: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .reports
            .iter()
            .filter(|r| r.method == method && r.metrics.label_ratio == Some(ratio))
            .map(|r| r.metrics.map)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Written next to the reports; records completed runs and the failure.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let done: Vec<serde_json::Value> = self
            .reports
            .iter()
            .map(|r| {
                serde_json::json!({
                    "method": r.method,
                    "seed": r.seed,
                    "label_ratio": r.metrics.label_ratio,
                    "map": r.metrics.map,
                    "split_hash": r.split_hash,
                })
            })
            .collect();
        let manifest = serde_json::json!({
            "complete": self.is_complete(),
            "completed_runs": done,
            "failure": self.failure,
        });
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Calls `run(ratio, seed)` for every grid point, seeds outermost. `run`
/// returns the reports of all compared methods at that point; each must
/// carry `label_ratio` and the split hash of its seed. The first failing run
/// stops the sweep and is recorded in the outcome.
pub fn run_label_ratio_sweep(
    ratios: &[f64],
    seeds: &[u64],
    mut run: impl FnMut(f64, u64) -> Result<Vec<MetricsReport>>,
) -> Result<SweepOutcome> {
    if ratios.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one ratio and one seed".into()));
    }
    if let Some(r) = ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::Config(format!("label ratio {r} not in (0, 1]")));
    }
    let mut outcome = SweepOutcome::default();
    let mut split_of_seed: BTreeMap<u64, String> = BTreeMap::new();
    for &seed in seeds {
        for &ratio in ratios {
            let result = run(ratio, seed).and_then(|reports| {
                for r in &reports {
                    let expected = split_of_seed.entry(seed).or_insert_with(|| r.split_hash.clone());
                    if *expected != r.split_hash {
                        return Err(Error::Runtime(format!(
                            "seed {seed}: runs used different splits ({expected} vs {})",
                            r.split_hash
                        )));
                    }
                }
                Ok(reports)
            });
            match result {
                Ok(mut reports) => {
                    log::info!("sweep ratio {ratio} seed {seed}: {} reports", reports.len());
                    outcome.reports.append(&mut reports);
                }
                Err(e) => {
                    log::error!("sweep aborted at ratio {ratio} seed {seed}: {e}");
                    outcome.failure = Some(SweepFailure {
                        ratio,
                        seed,
                        error: e.to_string(),
                    });
                    return Ok(outcome);
                }
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::report::Metrics;

    fn rep(method: &str, seed: u64, ratio: f64, map: f64) -> MetricsReport {
        let mut r = MetricsReport::new(
            "sweep",
            method,
            "d",
            seed,
            Metrics {
                map,
                per_class_ap: vec![Some(map)],
                auc: None,
                label_ratio: Some(ratio),
            },
        );
        r.split_hash = format!("split{seed}");
        r
    }

    #[test]
    fn failure_keeps_partial_results() {
        let out = run_label_ratio_sweep(&[0.5, 1.0], &[0, 1], |ratio, seed| {
            if seed == 1 && ratio == 1.0 {
                return Err(Error::Runtime("boom".into()));
            }
            Ok(vec![rep("a", seed, ratio, 0.5)])
        })
        .unwrap();
        assert_eq!(out.reports.len(), 3);
        assert_eq!(out.failure.as_ref().unwrap().seed, 1);
        let dir = tempfile::tempdir().unwrap();
        out.write_manifest(&dir.path().join("m.json")).unwrap();
    }

    #[test]
    fn relative_improvement_averages_seeds() {
        let out = run_label_ratio_sweep(&[0.1], &[0, 1], |ratio, seed| {
            let m = if seed == 0 { 0.6 } else { 0.45 };
            Ok(vec![rep("base", seed, ratio, 0.5), rep("mtl", seed, ratio, m)])
        })
        .unwrap();
        let ri = out.relative_improvements("mtl", "base");
        assert!((ri["0.1"] - 0.05).abs() < 1e-12);
        assert!((out.mean_map("mtl", 0.1).unwrap() - 0.525).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_ratios() {
        assert!(run_label_ratio_sweep(&[0.0], &[0], |_, _| Ok(vec![])).is_err());
        assert!(run_label_ratio_sweep(&[1.5], &[0], |_, _| Ok(vec![])).is_err());
    }

    #[test]
    fn mismatched_splits_abort() {
        let out = run_label_ratio_sweep(&[0.5, 1.0], &[0], |ratio, seed| {
            let mut r = rep("a", seed, ratio, 0.5);
            if ratio == 1.0 {
                r.split_hash = "other".into();
            }
            Ok(vec![r])
        })
        .unwrap();
        assert!(!out.is_complete());
    }
}
