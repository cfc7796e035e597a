//! CF2Label: a probe that predicts categories from a CF vector alone.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cf::EmbeddingTable;
use crate::data::{ItemCatalog, Role, SplitAssignment};
use crate::error::{Error, Result};
use crate::eval::ap::mean_average_precision;
use crate::nn::activation::{relu, relu_backward, sigmoid};
use crate::nn::params::{join, zeros_like, Parameters};
use crate::nn::{Adam, Linear};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cf2LabelHyper {
    /// Hidden width; defaults to `2 * f`.
    pub hidden: Option<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Set from the experiment seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for Cf2LabelHyper {
    fn default() -> Self {
        Self {
            hidden: None,
            lr: 0.01,
            epochs: 200,
            batch_size: 64,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

/// `f -> hidden (ReLU) -> N (sigmoid)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cf2LabelModel {
    pub hidden: Linear,
    pub output: Linear,
}

impl Parameters for Cf2LabelModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        self.hidden.visit(&join(prefix, "hidden"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.hidden.visit_mut(f);
        self.output.visit_mut(f);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Cf2LabelTrace {
    pub train_loss: Vec<f64>,
    pub val_map: Vec<Option<f64>>,
}

impl Cf2LabelModel {
    pub fn new(input: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, "cf2label/init");
        Self {
            hidden: Linear::new(input, hidden, 2f64.sqrt(), &mut r),
            output: Linear::new(hidden, classes, 1.0, &mut r),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.output.output_dim()
    }

    /// Output logits for a batch `[batch, f]`.
    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        self.output.forward(&relu(&self.hidden.forward(x)))
    }

    pub fn predict_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        self.logits(x).mapv(sigmoid)
    }

    /// Class probabilities for one CF vector.
    pub fn predict_labels(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "CF vector has length {}, probe expects {}",
                q.len(),
                self.input_dim()
            )));
        }
        let x = Array2::from_shape_vec((1, q.len()), q.to_vec()).expect("shape");
        Ok(self.predict_batch(&x).row(0).to_vec())
    }

    /// Mean per-class binary cross-entropy over the batch and its gradient.
    pub fn loss_and_gradient(&self, x: &Array2<f64>, y: &Array2<f64>) -> (f64, Self) {
        let z1 = self.hidden.forward(x);
        let h = relu(&z1);
        let logits = self.output.forward(&h);
        let count = (y.nrows() * y.ncols()) as f64;
        // BCE with logits: softplus(z) - y z
        let loss = logits
            .iter()
            .zip(y.iter())
            .map(|(&z, &t)| z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z)
            .sum::<f64>()
            / count;
        let dlogits = (logits.mapv(sigmoid) - y) / count;
        let mut grad = zeros_like(self);
        let dh = self.output.backward(&h, &dlogits, &mut grad.output);
        let dz1 = relu_backward(&z1, &dh);
        self.hidden.backward_params(x, &dz1, &mut grad.hidden);
        (loss, grad)
    }
}

fn stack(rows: &[&[f64]]) -> Array2<f64> {
    let dim = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((rows.len(), dim), |(b, k)| rows[b][k])
}

/// Items of `role` with both an embedding and labels, in catalog order.
fn probe_items<'a>(
    embeddings: &'a EmbeddingTable,
    catalog: &'a ItemCatalog,
    split: &'a SplitAssignment,
    role: Role,
) -> Vec<(&'a [f64], Vec<f64>)> {
    catalog
        .records()
        .iter()
        .filter(|r| split.role(&r.item_id) == Some(role))
        .filter_map(|r| {
            let q = embeddings.get(&r.item_id)?;
            let y = r.labels.as_ref()?;
            Some((q, y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()))
        })
        .collect()
}

/// Probe mAP on the items of `role` that have embeddings and labels.
pub fn probe_map(
    model: &Cf2LabelModel,
    embeddings: &EmbeddingTable,
    catalog: &ItemCatalog,
    split: &SplitAssignment,
    role: Role,
) -> Option<f64> {
    let items = probe_items(embeddings, catalog, split, role);
    if items.is_empty() {
        return None;
    }
    let x = stack(&items.iter().map(|(q, _)| *q).collect::<Vec<_>>());
    let labels = Array2::from_shape_fn((items.len(), catalog.num_classes()), |(b, n)| items[b].1[n] > 0.5);
    mean_average_precision(&model.predict_batch(&x), &labels, None)
        .ok()
        .map(|r| r.map)
}

/// Fits the probe on labeled train items that have an embedding.
pub fn train_cf2label(
    embeddings: &EmbeddingTable,
    catalog: &ItemCatalog,
    split: &SplitAssignment,
    hyper: &Cf2LabelHyper,
) -> Result<(Cf2LabelModel, Cf2LabelTrace)> {
    let items = probe_items(embeddings, catalog, split, Role::Train);
    if items.len() < 2 {
        return Err(Error::invalid(format!(
            "CF2Label needs at least 2 labeled train items with embeddings, found {}",
            items.len()
        )));
    }
    let f = embeddings.dim();
    let hidden = hyper.hidden.unwrap_or(2 * f);
    let mut model = Cf2LabelModel::new(f, hidden, catalog.num_classes(), hyper.seed);
    let mut opt = Adam::new(hyper.lr).with_weight_decay(hyper.weight_decay);
    let mut trace = Cf2LabelTrace::default();
    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng::substream(hyper.seed, "cf2label/epoch", epoch as u64));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            let x = stack(&chunk.iter().map(|&k| items[k].0).collect::<Vec<_>>());
            let y = Array2::from_shape_fn((chunk.len(), catalog.num_classes()), |(b, n)| items[chunk[b]].1[n]);
            let (loss, grad) = model.loss_and_gradient(&x, &y);
            opt.step(&mut model, &grad);
            epoch_loss += loss * chunk.len() as f64;
        }
        trace.train_loss.push(epoch_loss / items.len() as f64);
        if epoch + 1 == hyper.epochs || (epoch + 1) % 50 == 0 {
            let val = probe_map(&model, embeddings, catalog, split, Role::Val);
            if let Some(v) = val {
                log::debug!("cf2label epoch {}: val mAP {v:.4}", epoch + 1);
            }
            trace.val_map.push(val);
        }
    }
    Ok((model, trace))
}

/// Scores every item of `role` with the class-frequency prior of the labeled
/// train items (the same vector for every item).
pub fn class_prior(catalog: &ItemCatalog, split: &SplitAssignment) -> Array1<f64> {
    let mut counts = Array1::zeros(catalog.num_classes());
    let mut total = 0.0;
    for r in catalog.records() {
        if split.role(&r.item_id) == Some(Role::Train) && r.is_labeled() {
            for n in r.positives() {
                counts[n] += 1.0;
            }
            total += 1.0;
        }
    }
    if total > 0.0 {
        counts /= total;
    }
    counts
}
