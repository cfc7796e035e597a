use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemRecord {
    pub item_id: String,
    pub image_ref: PathBuf,
    /// Multi-hot vector over the catalog's classes; `None` for unlabeled items.
    pub labels: Option<Vec<bool>>,
}

impl ItemRecord {
    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .flat_map(|l| l.iter().enumerate().filter(|(_, &y)| y).map(|(n, _)| n))
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }
}

/// Items sorted by id, with a fixed class universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemCatalog {
    records: Vec<ItemRecord>,
    class_names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ItemCatalog {
    pub fn new(mut records: Vec<ItemRecord>, class_names: Vec<String>) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::invalid(format!(
                "catalog needs at least 2 classes, found {}",
                class_names.len()
            )));
        }
        records.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        let mut index = HashMap::with_capacity(records.len());
        for (k, r) in records.iter().enumerate() {
            if index.insert(r.item_id.clone(), k).is_some() {
                return Err(Error::invalid(format!("duplicate item_id {}", r.item_id)));
            }
            if let Some(labels) = &r.labels {
                if labels.len() != class_names.len() {
                    return Err(Error::invalid(format!(
                        "item {}: label vector has length {}, expected {}",
                        r.item_id,
                        labels.len(),
                        class_names.len()
                    )));
                }
            }
        }
        Ok(Self {
            records,
            class_names,
            index,
        })
    }

    pub fn records(&self) -> &[ItemRecord] {
        &self.records
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&ItemRecord> {
        self.index.get(item_id).map(|&k| &self.records[k])
    }

    pub fn position(&self, item_id: &str) -> Option<usize> {
        self.index.get(item_id).copied()
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.item_id.as_str())
    }

    pub fn num_labeled(&self) -> usize {
        self.records.iter().filter(|r| r.is_labeled()).count()
    }

    /// Returns a copy with the labels of the given items removed.
    pub fn without_labels(&self, unlabel: &BTreeSet<&str>) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if unlabel.contains(r.item_id.as_str()) {
                    r.labels = None;
                }
                r
            })
            .collect();
        Self {
            records,
            class_names: self.class_names.clone(),
            index: self.index.clone(),
        }
    }

    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let names: Vec<&str> = r.positives().map(|n| self.class_names[n].as_str()).collect();
            let _ = writeln!(out, "{}\t{}", r.item_id, names.join(","));
        }
        out
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_manifest()).map_err(|e| Error::io(path, e))
    }
}

/// Parses `item_id<TAB>class1,class2,...` lines. Class names are sorted
/// lexicographically to fix the label order.
pub fn parse_manifest(text: &str, path: &Path, image_dir: &Path) -> Result<ItemCatalog> {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(2, '\t');
        let id = fields.next().unwrap_or_default();
        if id.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: "empty item_id".into(),
            });
        }
        let classes = fields.next().unwrap_or("");
        if classes.contains('\t') {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: "expected `item_id<TAB>class,...`".into(),
            });
        }
        if !seen.insert(id.to_owned()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: format!("duplicate item_id {id}"),
            });
        }
        let names = classes
            .split(',')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_owned)
            .collect();
        rows.push((id.to_owned(), names));
    }
    let class_names: Vec<String> = rows
        .iter()
        .flat_map(|(_, c)| c.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if rows.iter().all(|(_, c)| c.is_empty()) {
        return Err(Error::invalid(format!("{}: no labeled items in catalog", path.display())));
    }
    let records = rows
        .into_iter()
        .map(|(id, names)| {
            let labels = (!names.is_empty()).then(|| {
                class_names
                    .iter()
                    .map(|c| names.iter().any(|n| n == c))
                    .collect()
            });
            ItemRecord {
                image_ref: image_dir.join(format!("{id}.png")),
                item_id: id,
                labels,
            }
        })
        .collect();
    ItemCatalog::new(records, class_names)
}

pub fn load_catalog(manifest_path: &Path, image_dir: &Path) -> Result<ItemCatalog> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    parse_manifest(&text, manifest_path, image_dir)
}
