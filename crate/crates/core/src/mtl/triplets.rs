//! Triplet mining for the contrastive baseline.

use rand::Rng as _;

use crate::cf::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng;

pub type Triplet = (String, String, String);

/// Nearest-neighbour positives, fixed once; negatives are redrawn per epoch.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    ids: Vec<String>,
    positive: Vec<usize>,
}

impl TripletSampler {
    pub fn new(embeddings: &EmbeddingTable) -> Result<Self> {
        let rows: Vec<(&str, &[f64])> = embeddings.iter().collect();
        if rows.len() < 3 {
            return Err(Error::invalid(format!(
                "triplets need at least 3 items with embeddings, found {}",
                rows.len()
            )));
        }
        // rows are sorted by id, so the first strict minimum wins ties
        let positive = (0..rows.len())
            .map(|a| {
                let mut best = (f64::INFINITY, usize::MAX);
                for (p, (_, q)) in rows.iter().enumerate() {
                    if p == a {
                        continue;
                    }
                    let d: f64 = rows[a].1.iter().zip(*q).map(|(x, y)| (x - y).powi(2)).sum();
                    if d < best.0 {
                        best = (d, p);
                    }
                }
                best.1
            })
            .collect();
        Ok(Self {
            ids: rows.iter().map(|(id, _)| id.to_string()).collect(),
            positive,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// One triplet per anchor, negatives drawn from `epoch_seed`.
    pub fn sample(&self, epoch_seed: u64) -> Vec<Triplet> {
        let mut r = rng::stream(epoch_seed, "triplets/negatives");
        let n = self.ids.len();
        (0..n)
            .map(|a| {
                let p = self.positive[a];
                let (lo, hi) = (a.min(p), a.max(p));
                let mut k = r.random_range(0..n - 2);
                if k >= lo {
                    k += 1;
                }
                if k >= hi {
                    k += 1;
                }
                (self.ids[a].clone(), self.ids[p].clone(), self.ids[k].clone())
            })
            .collect()
    }
}

/// Every embedded item appears once as an anchor, paired with its nearest
/// neighbour (L2 on the embeddings) and a uniformly drawn negative.
pub fn make_triplets(embeddings: &EmbeddingTable, epoch_seed: u64) -> Result<Vec<Triplet>> {
    Ok(TripletSampler::new(embeddings)?.sample(epoch_seed))
}
