use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Sparse binary user x item implicit-feedback matrix.
///
/// User and item ids are kept sorted lexicographically; entries are stored
/// per user as sorted item indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    users: Vec<String>,
    items: Vec<String>,
    user_items: Vec<Vec<usize>>,
    nnz: usize,
}

impl InteractionMatrix {
    /// Builds a matrix from raw pairs, de-duplicating them. The id sets are
    /// the ids mentioned by the pairs plus any extra ids supplied.
    pub fn from_pairs<U, I>(pairs: impl IntoIterator<Item = (U, I)>) -> Self
    where
        U: Into<String>,
        I: Into<String>,
    {
        let pairs: BTreeSet<(String, String)> = pairs
            .into_iter()
            .map(|(u, i)| (u.into(), i.into()))
            .collect();
        let users: BTreeSet<&str> = pairs.iter().map(|(u, _)| u.as_str()).collect();
        let items: BTreeSet<&str> = pairs.iter().map(|(_, i)| i.as_str()).collect();
        let users: Vec<String> = users.into_iter().map(str::to_owned).collect();
        let items: Vec<String> = items.into_iter().map(str::to_owned).collect();
        Self::from_sorted_ids(users, items, pairs)
    }

    /// Builds a matrix over the given id universes (sorted and de-duplicated
    /// here). Pairs mentioning ids outside the universes are rejected.
    pub fn with_ids(
        users: impl IntoIterator<Item = String>,
        items: impl IntoIterator<Item = String>,
        pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let users: Vec<String> = users.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let items: Vec<String> = items.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let pairs: BTreeSet<(String, String)> = pairs.into_iter().collect();
        for (u, i) in &pairs {
            if users.binary_search(u).is_err() || items.binary_search(i).is_err() {
                return Err(Error::invalid(format!("pair ({u}, {i}) outside id universe")));
            }
        }
        Ok(Self::from_sorted_ids(users, items, pairs))
    }

    fn from_sorted_ids(
        users: Vec<String>,
        items: Vec<String>,
        pairs: BTreeSet<(String, String)>,
    ) -> Self {
        let item_index: HashMap<&str, usize> =
            items.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
        let user_index: HashMap<&str, usize> =
            users.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
        let mut user_items = vec![Vec::new(); users.len()];
        for (u, i) in &pairs {
            user_items[user_index[u.as_str()]].push(item_index[i.as_str()]);
        }
        for row in &mut user_items {
            row.sort_unstable();
        }
        let nnz = pairs.len();
        Self {
            users,
            items,
            user_items,
            nnz,
        }
    }

    /// Matrix over the same id universes with the given index pairs.
    pub(crate) fn with_same_ids(&self, mut user_items: Vec<Vec<usize>>) -> Self {
        for row in &mut user_items {
            row.sort_unstable();
            row.dedup();
        }
        let nnz = user_items.iter().map(Vec::len).sum();
        Self {
            users: self.users.clone(),
            items: self.items.clone(),
            user_items,
            nnz,
        }
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_entries(&self) -> usize {
        self.nnz
    }

    pub fn sparsity(&self) -> f64 {
        self.nnz as f64 / (self.users.len() as f64 * self.items.len() as f64)
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.as_str().cmp(user_id)).ok()
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.items.binary_search_by(|i| i.as_str().cmp(item_id)).ok()
    }

    /// Sorted item indices the user interacted with.
    pub fn user_row(&self, user: usize) -> &[usize] {
        &self.user_items[user]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.user_items[user].binary_search(&item).is_ok()
    }

    /// |U_i| for every item, in item order.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.items.len()];
        for row in &self.user_items {
            for &i in row {
                counts[i] += 1;
            }
        }
        counts
    }

    /// All `(user, item)` index pairs, user-major.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.user_items
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&i| (u, i)))
    }

    /// Ids of the items with at least one interaction.
    pub fn active_items(&self) -> Vec<&str> {
        self.item_counts()
            .iter()
            .zip(&self.items)
            .filter(|(c, _)| **c > 0)
            .map(|(_, id)| id.as_str())
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.nnz * 16);
        for (u, i) in self.pairs() {
            let _ = writeln!(out, "{}\t{}", self.users[u], self.items[i]);
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Parses `user_id<TAB>item_id` lines. Blank lines are ignored.
pub fn parse_interactions(text: &str, path: &Path) -> Result<InteractionMatrix> {
    let mut pairs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(u), Some(i), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: "expected `user_id<TAB>item_id`".into(),
            });
        };
        if u.is_empty() || i.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg: "empty id".into(),
            });
        }
        pairs.push((u.to_owned(), i.to_owned()));
    }
    if pairs.is_empty() {
        return Err(Error::invalid(format!("{}: no interactions", path.display())));
    }
    Ok(InteractionMatrix::from_pairs(pairs))
}

pub fn load_interactions(path: &Path) -> Result<InteractionMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, path)
}
