//! Phase one: collaborative filtering models and item vector extraction.

pub mod bpr;
pub mod embeddings;
pub mod vae;

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use embeddings::{EmbeddingTable, Provenance};

use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::nn::params::{all_finite, load_named, to_named};
use crate::nn::{Checkpoint, NamedTensor};
use bpr::BprParams;
use vae::VaeParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfKind {
    Popularity,
    Bpr,
    Vae,
}

impl CfKind {
    pub fn name(self) -> &'static str {
        match self {
            CfKind::Popularity => "popularity",
            CfKind::Bpr => "bpr",
            CfKind::Vae => "vae",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfHyper {
    /// Latent dimensionality f.
    pub factors: usize,
    pub lr: f64,
    pub epochs: usize,
    /// L2 regularization (BPR) / weight decay (VAE).
    pub reg: f64,
    pub batch_size: usize,
    /// VAE encoder hidden width; defaults to `2 * factors`.
    pub hidden: Option<usize>,
    /// Upper bound of the KL weight.
    pub kl_cap: f64,
    /// Optimizer steps over which the KL weight ramps linearly to `kl_cap`.
    pub anneal_steps: usize,
    /// VAE input dropout rate.
    pub dropout: f64,
    /// BPR negatives sampled per positive.
    pub negatives: usize,
    /// Set from the experiment seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for CfHyper {
    fn default() -> Self {
        Self {
            factors: 16,
            lr: 1e-3,
            epochs: 100,
            reg: 0.0,
            batch_size: 100,
            hidden: None,
            kl_cap: 0.2,
            anneal_steps: 2000,
            dropout: 0.5,
            negatives: 1,
            seed: 0,
        }
    }
}

impl CfHyper {
    /// Defaults tuned for BPR's per-sample SGD.
    pub fn bpr_default() -> Self {
        Self {
            lr: 0.05,
            epochs: 40,
            reg: 0.01,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors < 1 || self.epochs < 1 {
            return Err(Error::invalid("cf.factors and cf.epochs must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("cf.dropout must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CfParams {
    Popularity { counts: Array1<f64> },
    Bpr(BprParams),
    Vae(VaeParams),
}

/// A trained CF model together with the training matrix it was fitted on
/// (VAE scoring encodes a user's training row).
#[derive(Debug, Clone, PartialEq)]
pub struct CfModel {
    pub kind: CfKind,
    pub params: CfParams,
    pub train: InteractionMatrix,
    pub factors: usize,
    pub seed: u64,
}

pub fn train_popularity(matrix: &InteractionMatrix) -> Result<CfModel> {
    if matrix.num_entries() == 0 {
        return Err(Error::invalid("popularity: empty interaction matrix"));
    }
    let counts = matrix.item_counts().into_iter().map(|c| c as f64).collect();
    Ok(CfModel {
        kind: CfKind::Popularity,
        params: CfParams::Popularity { counts },
        train: matrix.clone(),
        factors: 0,
        seed: 0,
    })
}

pub fn train_bpr(matrix: &InteractionMatrix, hyper: &CfHyper) -> Result<CfModel> {
    hyper.validate()?;
    let params = bpr::train(matrix, hyper);
    let model = CfModel {
        kind: CfKind::Bpr,
        params: CfParams::Bpr(params),
        train: matrix.clone(),
        factors: hyper.factors,
        seed: hyper.seed,
    };
    model.check_finite()?;
    Ok(model)
}

pub fn train_vae(matrix: &InteractionMatrix, hyper: &CfHyper) -> Result<(CfModel, vae::VaeTrace)> {
    hyper.validate()?;
    let (params, trace) = vae::train(matrix, hyper);
    let model = CfModel {
        kind: CfKind::Vae,
        params: CfParams::Vae(params),
        train: matrix.clone(),
        factors: hyper.factors,
        seed: hyper.seed,
    };
    model.check_finite()?;
    Ok((model, trace))
}

pub fn train(kind: CfKind, matrix: &InteractionMatrix, hyper: &CfHyper) -> Result<CfModel> {
    match kind {
        CfKind::Popularity => train_popularity(matrix),
        CfKind::Bpr => train_bpr(matrix, hyper),
        CfKind::Vae => train_vae(matrix, hyper).map(|(m, _)| m),
    }
}

impl CfModel {
    fn check_finite(&self) -> Result<()> {
        let ok = match &self.params {
            CfParams::Popularity { counts } => counts.iter().all(|v| v.is_finite()),
            CfParams::Bpr(p) => all_finite(p),
            CfParams::Vae(p) => all_finite(p),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Runtime(format!("{} training diverged (non-finite parameters)", self.kind.name())))
        }
    }

    /// Score of every item for one user; higher means more recommended.
    pub fn score_user(&self, user_id: &str) -> Result<Vec<f64>> {
        let u = self
            .train
            .user_index(user_id)
            .ok_or_else(|| Error::invalid(format!("unknown user {user_id}")))?;
        Ok(self.score_user_index(u))
    }

    pub fn score_user_index(&self, user: usize) -> Vec<f64> {
        match &self.params {
            CfParams::Popularity { counts } => counts.to_vec(),
            CfParams::Bpr(p) => p.user_scores(user),
            CfParams::Vae(p) => {
                let x = vae::dense_rows(&self.train, &[user]);
                p.score_rows(&x).row(0).to_vec()
            }
        }
    }

    /// Scores for a batch of users as `[users, items]`.
    pub fn score_users(&self, users: &[usize]) -> Array2<f64> {
        match &self.params {
            CfParams::Vae(p) => p.score_rows(&vae::dense_rows(&self.train, users)),
            _ => {
                let mut out = Array2::zeros((users.len(), self.train.num_items()));
                for (b, &u) in users.iter().enumerate() {
                    out.row_mut(b).assign(&Array1::from(self.score_user_index(u)));
                }
                out
            }
        }
    }

    /// Item ids ranked by descending score; ties keep item-id order.
    pub fn rank_items(&self, user: usize) -> Vec<&str> {
        let scores = self.score_user_index(user);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.iter().map(|&i| self.train.items()[i].as_str()).collect()
    }

    /// Item vectors for every item with at least one training interaction.
    ///
    /// BPR yields rows of `Q`; the VAE yields the per-item weights of the last
    /// decoder layer without the bias. Popularity has no latent vectors.
    pub fn extract_item_embeddings(&self, config_hash: &str) -> Result<EmbeddingTable> {
        let vectors: Vec<Vec<f64>> = match &self.params {
            CfParams::Popularity { .. } => {
                return Err(Error::invalid("popularity model has no latent representation"))
            }
            CfParams::Bpr(p) => p.item_factors.rows().into_iter().map(|r| r.to_vec()).collect(),
            CfParams::Vae(p) => vae::item_vectors(p).into_iter().map(|r| r.to_vec()).collect(),
        };
        let provenance = Provenance {
            model: self.kind.name().to_owned(),
            seed: self.seed,
            config_hash: config_hash.to_owned(),
        };
        let mut table = EmbeddingTable::new(self.factors, provenance.hash());
        let counts = self.train.item_counts();
        for ((id, v), c) in self.train.items().iter().zip(vectors).zip(counts) {
            if c > 0 {
                table.insert(id.clone(), v)?;
            }
        }
        Ok(table)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = match &self.params {
            CfParams::Popularity { counts } => vec![NamedTensor {
                name: "counts".into(),
                shape: vec![counts.len()],
                data: counts.to_vec(),
            }],
            CfParams::Bpr(p) => to_named(p, "bpr"),
            CfParams::Vae(p) => to_named(p, "vae"),
        };
        let rows: Vec<Vec<usize>> = (0..self.train.num_users())
            .map(|u| self.train.user_row(u).to_vec())
            .collect();
        let indptr: Vec<f64> = std::iter::once(0.0)
            .chain(rows.iter().scan(0usize, |acc, r| {
                *acc += r.len();
                Some(*acc as f64)
            }))
            .collect();
        let indices: Vec<f64> = rows.iter().flatten().map(|&i| i as f64).collect();
        tensors.push(NamedTensor {
            name: "train.indptr".into(),
            shape: vec![indptr.len()],
            data: indptr,
        });
        tensors.push(NamedTensor {
            name: "train.indices".into(),
            shape: vec![indices.len()],
            data: indices,
        });
        let meta = json!({
            "kind": self.kind,
            "factors": self.factors,
            "seed": self.seed,
            "users": self.train.users(),
            "items": self.train.items(),
        });
        Checkpoint::new(meta, tensors)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            kind: CfKind,
            factors: usize,
            seed: u64,
            users: Vec<String>,
            items: Vec<String>,
        }
        let meta: Meta = serde_json::from_value(ck.meta.clone())?;
        let get = |name: &str| {
            ck.tensor(name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks tensor {name}")))
        };
        let indptr = &get("train.indptr")?.data;
        let indices = &get("train.indices")?.data;
        if indptr.len() != meta.users.len() + 1 {
            return Err(Error::invalid("checkpoint train matrix does not match user list"));
        }
        let pairs = (0..meta.users.len()).flat_map(|u| {
            let (a, b) = (indptr[u] as usize, indptr[u + 1] as usize);
            let users = &meta.users;
            let items = &meta.items;
            indices[a..b]
                .iter()
                .map(move |&i| (users[u].clone(), items[i as usize].clone()))
        });
        let train = InteractionMatrix::with_ids(meta.users.clone(), meta.items.clone(), pairs.collect::<Vec<_>>())?;
        let n_items = meta.items.len();
        let params = match meta.kind {
            CfKind::Popularity => CfParams::Popularity {
                counts: Array1::from(get("counts")?.data.clone()),
            },
            CfKind::Bpr => {
                let mut p = BprParams::init(meta.users.len(), n_items, meta.factors, 0);
                load_named(&mut p, "bpr", &ck.tensors)?;
                CfParams::Bpr(p)
            }
            CfKind::Vae => {
                let hidden = get("vae.encoder.bias")?.shape[0];
                let mut p = VaeParams::init(n_items, hidden, meta.factors, 0);
                load_named(&mut p, "vae", &ck.tensors)?;
                CfParams::Vae(p)
            }
        };
        Ok(Self {
            kind: meta.kind,
            params,
            train,
            factors: meta.factors,
            seed: meta.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}
