use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Where a set of item vectors came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.model.as_bytes());
        h.update([0]);
        h.update(self.seed.to_le_bytes());
        h.update(self.config_hash.as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

/// Fixed-length latent vector per item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    /// Digest of the [`Provenance`] that produced the table.
    pub provenance: String,
}

/// Formats with 9 significant digits in scientific notation.
pub fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

impl EmbeddingTable {
    pub fn new(dim: usize, provenance: String) -> Self {
        Self {
            dim,
            vectors: BTreeMap::new(),
            provenance,
        }
    }

    pub fn insert(&mut self, item_id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::invalid(format!(
                "embedding length {} differs from table dimension {}",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Runtime("non-finite embedding value".into()));
        }
        self.vectors.insert(item_id.into(), v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&[f64]> {
        self.vectors.get(item_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Same items with every vector replaced by zeros (no-signal control).
    pub fn zeroed(&self) -> Self {
        Self {
            dim: self.dim,
            vectors: self
                .vectors
                .keys()
                .map(|k| (k.clone(), vec![0.0; self.dim]))
                .collect(),
            provenance: format!("{}-zeroed", self.provenance),
        }
    }

    /// Values rounded to what [`to_tsv`](Self::to_tsv) stores.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for v in out.vectors.values_mut() {
            for x in v.iter_mut() {
                *x = fmt_sig9(*x).parse().expect("formatted float parses");
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}\t{}\t{}", self.dim, self.vectors.len(), self.provenance);
        for (id, v) in &self.vectors {
            out.push_str(id);
            for x in v {
                out.push('\t');
                out.push_str(&fmt_sig9(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.to_owned(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        let [dim, count, provenance] = fields[..] else {
            return Err(parse_err(1, "header must be `f<TAB>num_items<TAB>provenance_hash`"));
        };
        let dim: usize = dim.parse().map_err(|_| parse_err(1, "bad dimension"))?;
        let count: usize = count.parse().map_err(|_| parse_err(1, "bad item count"))?;
        let mut table = Self::new(dim, provenance.to_owned());
        for (k, line) in lines.enumerate() {
            let mut fields = line.split('\t');
            let id = fields.next().filter(|s| !s.is_empty()).ok_or_else(|| parse_err(k + 2, "missing item id"))?;
            let v = fields
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| parse_err(k + 2, "bad float"))?;
            if v.len() != dim {
                return Err(parse_err(k + 2, &format!("expected {dim} values, found {}", v.len())));
            }
            table.insert(id, v).map_err(|e| parse_err(k + 2, &e.to_string()))?;
        }
        if table.len() != count {
            return Err(parse_err(1, &format!("header says {count} items, found {}", table.len())));
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn tsv_is_stable_after_one_round_trip(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..10)
        ) {
            let mut t = EmbeddingTable::new(3, "abc".into());
            for (k, v) in rows.into_iter().enumerate() {
                t.insert(format!("i{k}"), v).unwrap();
            }
            let text = t.to_tsv();
            let back = EmbeddingTable::from_tsv(&text, Path::new("e.tsv")).unwrap();
            prop_assert_eq!(back.to_tsv(), text);
            prop_assert_eq!(back, t.quantized());
        }
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let text = "2\t2\tp\ni1\t1\t2\n";
        assert!(EmbeddingTable::from_tsv(text, Path::new("e")).is_err());
        let text = "2\t1\tp\ni1\t1\n";
        assert!(EmbeddingTable::from_tsv(text, Path::new("e")).is_err());
    }
}
