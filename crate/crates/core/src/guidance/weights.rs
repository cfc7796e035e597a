//! Per-item confidence weights for the auxiliary reconstruction loss.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cf2label::Cf2LabelModel;
use crate::cf::embeddings::fmt_sig9;
use crate::cf::EmbeddingTable;
use crate::data::{InteractionMatrix, ItemCatalog};
use crate::error::{Error, Result};

/// Probabilities are clipped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    Uniform,
    Interaction,
    Loss,
}

impl WeightScheme {
    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::Interaction => "interaction",
            WeightScheme::Loss => "loss",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "interaction" => Ok(Self::Interaction),
            "loss" => Ok(Self::Loss),
            other => Err(Error::invalid(format!("unknown weight scheme `{other}`"))),
        }
    }
}

/// Normalized weights `omega >= 0`; absent items have weight 0. The clamp by
/// the cap happens at loss time.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub scheme: WeightScheme,
    omega: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl WeightTable {
    /// Scales raw weights so that their mean over strictly positive entries is 1.
    pub fn normalized(scheme: WeightScheme, raw: BTreeMap<String, f64>) -> Self {
        let positive: Vec<f64> = raw.values().copied().filter(|&w| w > 0.0).collect();
        let mean = positive.iter().sum::<f64>() / positive.len().max(1) as f64;
        let omega = raw
            .into_iter()
            .map(|(k, w)| (k, if w > 0.0 { w / mean } else { 0.0 }))
            .collect();
        Self {
            scheme,
            omega,
            warnings: Vec::new(),
        }
    }

    pub fn omega(&self, item_id: &str) -> f64 {
        self.omega.get(item_id).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.omega.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn mean_positive(&self) -> f64 {
        let pos: Vec<f64> = self.omega.values().copied().filter(|&w| w > 0.0).collect();
        pos.iter().sum::<f64>() / pos.len().max(1) as f64
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, w) in &self.omega {
            let _ = writeln!(out, "{id}\t{}\t{}", fmt_sig9(*w), self.scheme.name());
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut scheme = None;
        let mut omega = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: msg.to_owned(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, w, s] = fields[..] else {
                return Err(err("expected `item_id<TAB>omega<TAB>scheme`"));
            };
            let w: f64 = w.parse().map_err(|_| err("bad omega"))?;
            if !(w.is_finite() && w >= 0.0) {
                return Err(err("omega must be finite and >= 0"));
            }
            let s = WeightScheme::parse(s).map_err(|e| err(&e.to_string()))?;
            if *scheme.get_or_insert(s) != s {
                return Err(err("mixed schemes in one weights file"));
            }
            omega.insert(id.to_owned(), w);
        }
        Ok(Self {
            scheme: scheme.ok_or_else(|| Error::invalid(format!("{}: empty weights file", path.display())))?,
            omega,
            warnings: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, path)
    }
}

/// Weight 1 for every item with an embedding, 0 for the rest of `items`.
pub fn weight_uniform<'a>(items: impl IntoIterator<Item = &'a str>, embeddings: &EmbeddingTable) -> WeightTable {
    let raw = items
        .into_iter()
        .map(|id| (id.to_owned(), if embeddings.get(id).is_some() { 1.0 } else { 0.0 }))
        .collect();
    WeightTable::normalized(WeightScheme::Uniform, raw)
}

/// Raw weight `sqrt(|U_i|)` from the (masked) training matrix, restricted to
/// items with an embedding.
pub fn weight_interaction(matrix: &InteractionMatrix, embeddings: &EmbeddingTable) -> WeightTable {
    let raw = matrix
        .items()
        .iter()
        .zip(matrix.item_counts())
        .map(|(id, c)| {
            let w = if embeddings.get(id).is_some() { (c as f64).sqrt() } else { 0.0 };
            (id.clone(), w)
        })
        .collect();
    WeightTable::normalized(WeightScheme::Interaction, raw)
}

/// Mean negative log-likelihood of the probe on the positive labels.
/// `None` when the item has no positive label.
pub fn positive_label_nll(y_hat: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 {
        return None;
    }
    let sum: f64 = y_hat
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y)
        .map(|(&p, _)| -p.clamp(EPS, 1.0 - EPS).ln())
        .sum();
    Some(sum / positives as f64)
}

/// Raw loss-based weight: reciprocal of [`positive_label_nll`].
pub fn loss_weight(y_hat: &[f64], labels: &[bool]) -> Option<f64> {
    positive_label_nll(y_hat, labels).map(|l| 1.0 / l)
}

/// Loss-based weights for items that have labels and an embedding.
pub fn weight_lossbased(
    model: &Cf2LabelModel,
    embeddings: &EmbeddingTable,
    catalog: &ItemCatalog,
) -> Result<WeightTable> {
    let mut raw = BTreeMap::new();
    let mut warnings = Vec::new();
    for r in catalog.records() {
        let w = match (embeddings.get(&r.item_id), &r.labels) {
            (Some(q), Some(labels)) => {
                let y_hat = model.predict_labels(q)?;
                loss_weight(&y_hat, labels).unwrap_or_else(|| {
                    warnings.push(format!("item {} has no positive label; weight 0", r.item_id));
                    0.0
                })
            }
            _ => 0.0,
        };
        raw.insert(r.item_id.clone(), w);
    }
    if raw.values().all(|&w| w == 0.0) {
        return Err(Error::invalid("loss-based weighting: no item has both labels and an embedding"));
    }
    let mut table = WeightTable::normalized(WeightScheme::Loss, raw);
    table.warnings = warnings;
    Ok(table)
}
