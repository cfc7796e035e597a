use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::catalog::ItemCatalog;
use super::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

/// Train/val/test role for every catalog item. Persisted as `splits.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    /// `[train, val, test]` fractions of the catalog.
    pub ratios: [f64; 3],
    pub assignment: BTreeMap<String, Role>,
}

impl SplitAssignment {
    pub fn role(&self, item_id: &str) -> Option<Role> {
        self.assignment.get(item_id).copied()
    }

    pub fn items_with(&self, role: Role) -> impl Iterator<Item = &str> {
        self.assignment
            .iter()
            .filter(move |(_, r)| **r == role)
            .map(|(id, _)| id.as_str())
    }

    pub fn count(&self, role: Role) -> usize {
        self.items_with(role).count()
    }

    pub fn is_heldout(&self, item_id: &str) -> bool {
        matches!(self.role(item_id), Some(Role::Val | Role::Test))
    }

    /// Stable digest of the assignment, embedded in every downstream report.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        for (id, role) in &self.assignment {
            hasher.update(id.as_bytes());
            hasher.update([0, *role as u8]);
        }
        hex::encode(&hasher.finalize()[..8])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn round_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round() as usize
}

/// Holds out `round(holdout_ratio * |items|)` items uniformly at random and
/// splits them into val (ceil half) and test (floor half).
pub fn split_items(catalog: &ItemCatalog, holdout_ratio: f64, seed: u64) -> Result<SplitAssignment> {
    if !(holdout_ratio > 0.0 && holdout_ratio < 1.0) {
        return Err(Error::invalid(format!("holdout ratio {holdout_ratio} not in (0, 1)")));
    }
    let n = catalog.len();
    let heldout = round_count(holdout_ratio, n);
    if heldout < 2 {
        return Err(Error::invalid("cannot form val and test: holdout smaller than 2 items"));
    }
    let mut ids: Vec<&str> = catalog.item_ids().collect();
    ids.shuffle(&mut rng::stream(seed, "split_items"));
    let n_val = heldout.div_ceil(2);
    let assignment = ids
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let role = if k < n_val {
                Role::Val
            } else if k < heldout {
                Role::Test
            } else {
                Role::Train
            };
            (id.to_string(), role)
        })
        .collect();
    let nf = n as f64;
    Ok(SplitAssignment {
        seed,
        ratios: [
            (n - heldout) as f64 / nf,
            n_val as f64 / nf,
            (heldout - n_val) as f64 / nf,
        ],
        assignment,
    })
}

/// Drops every interaction with a val/test item. The id universes are kept.
pub fn mask_heldout_interactions(
    matrix: &InteractionMatrix,
    split: &SplitAssignment,
) -> InteractionMatrix {
    let heldout: Vec<bool> = matrix.items().iter().map(|id| split.is_heldout(id)).collect();
    let rows = (0..matrix.num_users())
        .map(|u| {
            matrix
                .user_row(u)
                .iter()
                .copied()
                .filter(|&i| !heldout[i])
                .collect()
        })
        .collect();
    matrix.with_same_ids(rows)
}

/// Moves `round(test_ratio * |entries|)` uniformly chosen entries to a test
/// matrix. Both outputs share the input's id universes.
pub fn split_interactions(
    matrix: &InteractionMatrix,
    test_ratio: f64,
    seed: u64,
) -> Result<(InteractionMatrix, InteractionMatrix)> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::invalid(format!("test ratio {test_ratio} not in (0, 1)")));
    }
    if matrix.num_entries() == 0 {
        return Err(Error::invalid("cannot split an empty interaction matrix"));
    }
    let mut pairs: Vec<(usize, usize)> = matrix.pairs().collect();
    pairs.shuffle(&mut rng::stream(seed, "split_interactions"));
    let n_test = round_count(test_ratio, pairs.len());
    let mut train = vec![Vec::new(); matrix.num_users()];
    let mut test = vec![Vec::new(); matrix.num_users()];
    for (k, (u, i)) in pairs.into_iter().enumerate() {
        if k < n_test {
            test[u].push(i);
        } else {
            train[u].push(i);
        }
    }
    Ok((matrix.with_same_ids(train), matrix.with_same_ids(test)))
}

/// Result of [`drop_labels`]: the reduced catalog plus non-fatal warnings.
#[derive(Debug, Clone)]
pub struct LabelDrop {
    pub catalog: ItemCatalog,
    pub kept: usize,
    pub warnings: Vec<String>,
}

/// Keeps labels on `round(label_ratio * |labeled train items|)` train items.
///
/// Retention follows a seeded priority order over the labeled train items, so
/// for a fixed seed the retained set at a lower ratio is a prefix of the set
/// at a higher ratio.
pub fn drop_labels(
    catalog: &ItemCatalog,
    label_ratio: f64,
    seed: u64,
    split: &SplitAssignment,
) -> Result<LabelDrop> {
    if !(label_ratio > 0.0 && label_ratio <= 1.0) {
        return Err(Error::invalid(format!("label ratio {label_ratio} not in (0, 1]")));
    }
    let mut labeled: Vec<&str> = catalog
        .records()
        .iter()
        .filter(|r| r.is_labeled() && split.role(&r.item_id) == Some(Role::Train))
        .map(|r| r.item_id.as_str())
        .collect();
    labeled.shuffle(&mut rng::stream(seed, "drop_labels"));
    let kept = round_count(label_ratio, labeled.len());
    let unlabel: BTreeSet<&str> = labeled[kept..].iter().copied().collect();
    let reduced = catalog.without_labels(&unlabel);

    let mut warnings = Vec::new();
    let surviving: BTreeSet<usize> = reduced
        .records()
        .iter()
        .filter(|r| split.role(&r.item_id) == Some(Role::Train))
        .flat_map(|r| r.positives())
        .collect();
    if surviving.len() < catalog.num_classes() {
        warnings.push(format!(
            "label ratio {label_ratio}: only {} of {} classes keep a labeled train item",
            surviving.len(),
            catalog.num_classes()
        ));
    }
    Ok(LabelDrop {
        catalog: reduced,
        kept,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::catalog::ItemRecord;
    use std::path::PathBuf;

    fn catalog(n: usize) -> ItemCatalog {
        let records = (0..n)
            .map(|k| ItemRecord {
                item_id: format!("i{k:05}"),
                image_ref: PathBuf::new(),
                labels: Some(vec![k % 2 == 0, k % 2 == 1]),
            })
            .collect();
        ItemCatalog::new(records, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn holdout_counting_rule() {
        let s = split_items(&catalog(10), 0.30, 7).unwrap();
        assert_eq!(
            (s.count(Role::Train), s.count(Role::Val), s.count(Role::Test)),
            (7, 2, 1)
        );
        assert_eq!(s, split_items(&catalog(10), 0.30, 7).unwrap());
    }

    #[test]
    fn holdout_at_full_pinterest_scale() {
        let s = split_items(&catalog(27_080), 0.30, 0).unwrap();
        assert_eq!(
            (s.count(Role::Train), s.count(Role::Val), s.count(Role::Test)),
            (18_956, 4_062, 4_062)
        );
    }

    #[test]
    fn tiny_holdout_is_rejected() {
        let err = split_items(&catalog(4), 0.2, 0).unwrap_err();
        assert!(err.to_string().contains("cannot form val and test"));
        assert!(split_items(&catalog(4), 1.0, 0).is_err());
    }

    #[test]
    fn masking_removes_exactly_the_heldout_column() {
        let pairs = (0..5).map(|u| (format!("u{u}"), "i00000".to_string()));
        let pairs = pairs.chain([("u0".to_string(), "i00001".to_string())]);
        let m = InteractionMatrix::from_pairs(pairs);
        let mut split = split_items(&catalog(10), 0.3, 1).unwrap();
        for role in split.assignment.values_mut() {
            *role = Role::Train;
        }
        assert_eq!(mask_heldout_interactions(&m, &split), m);
        split.assignment.insert("i00000".into(), Role::Test);
        let masked = mask_heldout_interactions(&m, &split);
        assert_eq!(masked.num_entries(), m.num_entries() - 5);
        assert_eq!(masked.users(), m.users());
    }

    #[test]
    fn interaction_split_partitions() {
        let m = InteractionMatrix::from_pairs((0..10).map(|k| (format!("u{}", k % 3), format!("i{k}"))));
        let (train, test) = split_interactions(&m, 0.2, 3).unwrap();
        assert_eq!((train.num_entries(), test.num_entries()), (8, 2));
        let mut union: Vec<_> = train.pairs().chain(test.pairs()).collect();
        union.sort();
        let mut orig: Vec<_> = m.pairs().collect();
        orig.sort();
        assert_eq!(union, orig);
        assert_eq!(split_interactions(&m, 0.2, 3).unwrap().1, test);
    }

    #[test]
    fn full_scale_interaction_rounding() {
        assert_eq!(round_count(0.2, 265_252), 53_050);
    }

    #[test]
    fn drop_labels_counts_and_identity() {
        let cat = catalog(143);
        let split = split_items(&cat, 0.3, 0).unwrap();
        assert_eq!(split.count(Role::Train), 100);
        let full = drop_labels(&cat, 1.0, 5, &split).unwrap();
        assert_eq!(full.catalog, cat);
        let tenth = drop_labels(&cat, 0.1, 5, &split).unwrap();
        let labeled_train = tenth
            .catalog
            .records()
            .iter()
            .filter(|r| r.is_labeled() && split.role(&r.item_id) == Some(Role::Train))
            .count();
        assert_eq!(labeled_train, 10);
        // held-out items untouched
        for id in split.items_with(Role::Test) {
            assert!(tenth.catalog.get(id).unwrap().is_labeled());
        }
        assert_eq!(drop_labels(&cat, 0.1, 5, &split).unwrap().catalog, tenth.catalog);
    }

    #[test]
    fn drop_labels_warns_when_classes_vanish() {
        let cat = catalog(143);
        let split = split_items(&cat, 0.3, 0).unwrap();
        let drop = drop_labels(&cat, 0.01, 0, &split).unwrap();
        assert_eq!(drop.kept, 1);
        assert_eq!(drop.warnings.len(), 1);
    }
}
