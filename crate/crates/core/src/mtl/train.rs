//! The four phase-two training regimes.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::encoder::EncoderPreset;
use super::losses::{self, LossConfig};
use super::model::{Forward, MtlModel};
use super::triplets::TripletSampler;
use crate::cf::EmbeddingTable;
use crate::data::{ImageStore, ItemCatalog, Role, SplitAssignment};
use crate::error::{Error, Result};
use crate::eval::ap::{mean_average_precision, MapResult};
use crate::guidance::WeightTable;
use crate::nn::params::{add_scaled, all_finite, checksum, clip_global_norm, zeros_like};
use crate::nn::Sgd;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ImageOnly,
    MtlReconstruct,
    Contrastive,
    Sequential,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::ImageOnly => "image_only",
            Regime::MtlReconstruct => "mtl_reconstruct",
            Regime::Contrastive => "contrastive",
            Regime::Sequential => "sequential",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        self != Regime::ImageOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtlHyper {
    pub regime: Regime,
    pub alpha: f64,
    /// Clamp on item weights.
    pub cap: f64,
    /// Triplet margin for the contrastive regime.
    pub tau: f64,
    pub epochs: usize,
    /// Auxiliary-only epochs before fine-tuning (sequential regime).
    pub epochs_aux: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Norm cap on the auxiliary part of each step's gradient, applied
    /// before it is added to the main-task gradient.
    pub aux_clip_norm: Option<f64>,
    /// CF targets are multiplied by one factor so that their mean L2 norm
    /// equals this value; `None` regresses the raw vectors.
    pub target_norm: Option<f64>,
    pub encoder: EncoderPreset,
    /// Set from the experiment seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for MtlHyper {
    fn default() -> Self {
        Self {
            regime: Regime::MtlReconstruct,
            alpha: 1.5,
            cap: 5.0,
            tau: 1.0,
            epochs: 30,
            epochs_aux: 10,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            clip_norm: Some(5.0),
            aux_clip_norm: Some(0.3),
            target_norm: Some(1.0),
            encoder: EncoderPreset::DeskSmall,
            seed: 0,
        }
    }
}

impl MtlHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("mtl.batch_size must be > 0".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("mtl.lr must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("mtl.momentum must be in [0, 1)".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("mtl.clip_norm must be > 0".into()));
        }
        if self.aux_clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("mtl.aux_clip_norm must be > 0".into()));
        }
        if self.target_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("mtl.target_norm must be > 0".into()));
        }
        LossConfig::new(self.alpha, self.cap, self.tau, Vec::new()).map(|_| ())
    }
}

/// Everything a run reads besides collaborative targets.
#[derive(Clone, Copy)]
pub struct TrainData<'a> {
    pub catalog: &'a ItemCatalog,
    pub split: &'a SplitAssignment,
    pub images: &'a ImageStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_main: f64,
    pub loss_aux: f64,
    pub val_map: Option<f64>,
    /// Digest of the parameters at the end of the epoch.
    pub checksum: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MtlModel,
    pub regime: Regime,
    pub log: Vec<EpochLog>,
    /// Auxiliary-only stage of the sequential regime.
    pub pretrain_log: Vec<EpochLog>,
    /// 0 when no epoch beat the untrained model or no epochs ran.
    pub best_epoch: usize,
    pub best_val_map: Option<f64>,
    /// Train items with neither a label nor a usable CF target.
    pub wasted_samples: usize,
    pub initial_checksum: String,
}

impl TrainOutcome {
    pub fn checksums(&self) -> Vec<&str> {
        self.log.iter().map(|e| e.checksum.as_str()).collect()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

/// `epoch,loss_main,loss_aux,val_mAP`
pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,loss_main,loss_aux,val_mAP\n");
    for e in log {
        let _ = writeln!(out, "{},{:.6},{:.6},{}", e.epoch, e.loss_main, e.loss_aux, fmt_opt(e.val_map));
    }
    out
}

pub fn write_log_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    std::fs::write(path, log_csv(log)).map_err(|e| Error::io(path, e))
}

fn label_row(catalog: &ItemCatalog, item_id: &str) -> Option<Vec<f64>> {
    catalog
        .get(item_id)?
        .labels
        .as_ref()
        .map(|l| l.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
}

/// Class probabilities for `item_ids`, one row per item.
pub fn score_items(model: &MtlModel, images: &ImageStore, item_ids: &[&str]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((item_ids.len(), model.num_classes()));
    for (c, chunk) in item_ids.chunks(256).enumerate() {
        let imgs = chunk.iter().map(|id| images.get(id)).collect::<Result<Vec<_>>>()?;
        let probs = model.predict_probs(&imgs);
        out.slice_mut(ndarray::s![c * 256..c * 256 + chunk.len(), ..]).assign(&probs);
    }
    Ok(out)
}

/// mAP of `model` on the labeled items of `role`.
pub fn evaluate_map(model: &MtlModel, data: TrainData<'_>, role: Role) -> Result<MapResult> {
    let ids: Vec<&str> = data
        .catalog
        .records()
        .iter()
        .filter(|r| r.is_labeled() && data.split.role(&r.item_id) == Some(role))
        .map(|r| r.item_id.as_str())
        .collect();
    if ids.is_empty() {
        return Err(Error::invalid(format!("no labeled {role:?} items to evaluate")));
    }
    let scores = score_items(model, data.images, &ids)?;
    let labels = Array2::from_shape_fn((ids.len(), data.catalog.num_classes()), |(b, n)| {
        data.catalog.get(ids[b]).and_then(|r| r.labels.as_ref()).is_some_and(|l| l[n])
    });
    mean_average_precision(&scores, &labels, None)
}

/// Factor applied to every CF target under `target_norm`.
pub fn target_scale(embeddings: &EmbeddingTable, target_norm: Option<f64>) -> f64 {
    let Some(norm) = target_norm else { return 1.0 };
    let norms: Vec<f64> = embeddings
        .iter()
        .map(|(_, q)| q.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mean = norms.iter().sum::<f64>() / norms.len().max(1) as f64;
    if mean > 0.0 {
        norm / mean
    } else {
        1.0
    }
}

fn scaled(q: &[f64], factor: f64) -> Vec<f64> {
    q.iter().map(|v| v * factor).collect()
}

/// One item's targets for the current regime.
struct Sample {
    id: String,
    labels: Option<Vec<f64>>,
    /// CF target and its effective multiplier `alpha * min(omega, cap)`.
    aux: Option<(Vec<f64>, f64, f64)>,
}

struct Trainer<'a> {
    data: TrainData<'a>,
    hyper: &'a MtlHyper,
    loss: LossConfig,
    model: MtlModel,
    opt: Sgd,
}

#[derive(Default)]
struct EpochTotals {
    main: f64,
    main_count: usize,
    aux: f64,
    aux_count: usize,
}

impl EpochTotals {
    fn means(&self) -> (f64, f64) {
        let mean = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
        (mean(self.main, self.main_count), mean(self.aux, self.aux_count))
    }
}

impl<'a> Trainer<'a> {
    fn new(data: TrainData<'a>, hyper: &'a MtlHyper, cf_dim: usize) -> Result<Self> {
        hyper.validate()?;
        let class_weights = losses::class_weights(data.catalog, data.split)?;
        let loss = LossConfig::new(hyper.alpha, hyper.cap, hyper.tau, class_weights)?;
        let model = MtlModel::new(
            &hyper.encoder,
            data.images.side(),
            data.catalog.num_classes(),
            cf_dim,
            hyper.seed,
        )?;
        Ok(Self {
            data,
            hyper,
            loss,
            model,
            opt: Sgd::new(hyper.lr, hyper.momentum).with_weight_decay(hyper.weight_decay),
        })
    }

    fn train_ids(&self) -> impl Iterator<Item = &'a str> + 'a {
        let split = self.data.split;
        self.data
            .catalog
            .records()
            .iter()
            .filter(move |r| split.role(&r.item_id) == Some(Role::Train))
            .map(|r| r.item_id.as_str())
    }

    fn images(&self, ids: &[&str]) -> Result<Vec<&'a [f64]>> {
        ids.iter().map(|id| self.data.images.get(id)).collect()
    }

    /// Parameter gradient of one step. Under `aux_clip_norm` the auxiliary
    /// term is backpropagated on its own and clipped before being added.
    fn backward(&self, fwd: &Forward, dlogits: &Array2<f64>, dq: Option<&Array2<f64>>) -> MtlModel {
        let mut grad = zeros_like(&self.model);
        match (dq, self.hyper.aux_clip_norm) {
            (Some(dq), Some(c)) => {
                self.model.backward(fwd, dlogits, None, &mut grad);
                let mut aux = zeros_like(&self.model);
                self.model.backward(fwd, &Array2::zeros(dlogits.dim()), Some(dq), &mut aux);
                clip_global_norm(&mut aux, c);
                add_scaled(&mut grad, &aux, 1.0);
            }
            _ => self.model.backward(fwd, dlogits, dq, &mut grad),
        }
        grad
    }

    fn apply(&mut self, mut grad: MtlModel, epoch: usize) -> Result<()> {
        if let Some(c) = self.hyper.clip_norm {
            clip_global_norm(&mut grad, c);
        }
        if !all_finite(&grad) {
            return Err(Error::Runtime(format!(
                "non-finite gradient in epoch {epoch}; lower mtl.lr or mtl.alpha"
            )));
        }
        self.opt.step(&mut self.model, &grad);
        Ok(())
    }

    /// One optimizer step on `batch` under the multitask objective.
    fn step_mtl(&mut self, batch: &[&Sample], epoch: usize, totals: &mut EpochTotals) -> Result<()> {
        let ids: Vec<&str> = batch.iter().map(|s| s.id.as_str()).collect();
        let fwd = self.model.forward(&self.images(&ids)?);
        let b = batch.len() as f64;
        let (n, f) = (self.model.num_classes(), self.model.cf_dim());
        let mut dlogits = Array2::zeros((batch.len(), n));
        let mut dq: Option<Array2<f64>> = None;
        for (k, s) in batch.iter().enumerate() {
            let y_hat = fwd.y_hat.row(k).to_vec();
            if let Some(y) = &s.labels {
                totals.main += losses::loss_main(&y_hat, y, &self.loss.class_weights)?;
                totals.main_count += 1;
                let g = losses::grad_loss_main_logits(&y_hat, y, &self.loss.class_weights);
                for (j, v) in g.into_iter().enumerate() {
                    dlogits[[k, j]] = v / b;
                }
            }
            if let Some((q, omega, scale)) = &s.aux {
                let q_hat = fwd.q_hat.row(k).to_vec();
                totals.aux += losses::loss_aux(q, &q_hat, *omega, self.loss.cap)?;
                totals.aux_count += 1;
                let g = losses::grad_cf_reconstruct(q, &q_hat)?;
                let dq = dq.get_or_insert_with(|| Array2::zeros((batch.len(), f)));
                for (j, v) in g.into_iter().enumerate() {
                    dq[[k, j]] = scale * v / b;
                }
            }
        }
        let grad = self.backward(&fwd, &dlogits, dq.as_ref());
        self.apply(grad, epoch)
    }

    /// One step of `mean loss_main(batch) + alpha * mean triplet(chunk)`.
    fn step_contrastive(
        &mut self,
        batch: &[&Sample],
        triplets: &[(String, String, String)],
        epoch: usize,
        totals: &mut EpochTotals,
    ) -> Result<()> {
        let mut ids: Vec<&str> = batch.iter().map(|s| s.id.as_str()).collect();
        let m = ids.len();
        let t = triplets.len();
        ids.extend(triplets.iter().map(|x| x.0.as_str()));
        ids.extend(triplets.iter().map(|x| x.1.as_str()));
        ids.extend(triplets.iter().map(|x| x.2.as_str()));
        let fwd = self.model.forward(&self.images(&ids)?);
        let (n, f) = (self.model.num_classes(), self.model.cf_dim());
        let mut dlogits = Array2::zeros((ids.len(), n));
        for (k, s) in batch.iter().enumerate() {
            let y_hat = fwd.y_hat.row(k).to_vec();
            let y = s.labels.as_ref().expect("contrastive batches hold labeled items");
            totals.main += losses::loss_main(&y_hat, y, &self.loss.class_weights)?;
            totals.main_count += 1;
            let g = losses::grad_loss_main_logits(&y_hat, y, &self.loss.class_weights);
            for (j, v) in g.into_iter().enumerate() {
                dlogits[[k, j]] = v / m as f64;
            }
        }
        let mut dq = None;
        if t > 0 && self.loss.alpha > 0.0 {
            let mut d = Array2::zeros((ids.len(), f));
            for k in 0..t {
                let (a, p, ng) = (m + k, m + t + k, m + 2 * t + k);
                let va = fwd.q_hat.row(a).to_vec();
                let vp = fwd.q_hat.row(p).to_vec();
                let vn = fwd.q_hat.row(ng).to_vec();
                totals.aux += losses::loss_triplet(&va, &vp, &vn, self.loss.tau)?;
                totals.aux_count += 1;
                let [ga, gp, gn] = losses::grad_loss_triplet(&va, &vp, &vn, self.loss.tau)?;
                let s = self.loss.alpha / t as f64;
                for j in 0..f {
                    d[[a, j]] += s * ga[j];
                    d[[p, j]] += s * gp[j];
                    d[[ng, j]] += s * gn[j];
                }
            }
            dq = Some(d);
        }
        let grad = self.backward(&fwd, &dlogits, dq.as_ref());
        self.apply(grad, epoch)
    }

    fn val_map(&self) -> Result<Option<f64>> {
        match evaluate_map(&self.model, self.data, Role::Val) {
            Ok(r) => Ok(Some(r.map)),
            Err(e) if e.is_validation() => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn batches<'s>(&self, samples: &'s [Sample], label: &str, epoch: usize) -> Vec<Vec<&'s Sample>> {
        let mut order: Vec<&Sample> = samples.iter().collect();
        order.shuffle(&mut rng::substream(self.hyper.seed, label, epoch as u64));
        order.chunks(self.hyper.batch_size).map(<[_]>::to_vec).collect()
    }

    /// Runs `epochs` epochs, keeping the parameters with the best validation
    /// mAP (first one on ties).
    fn fit(
        &mut self,
        samples: &[Sample],
        triplets: Option<&TripletSampler>,
        epochs: usize,
    ) -> Result<(Vec<EpochLog>, usize, Option<f64>)> {
        let mut log = Vec::with_capacity(epochs);
        let mut best: Option<(f64, usize, MtlModel)> = None;
        for epoch in 1..=epochs {
            let mut totals = EpochTotals::default();
            let batches = self.batches(samples, "mtl/epoch", epoch);
            match triplets {
                None => {
                    for batch in &batches {
                        self.step_mtl(batch, epoch, &mut totals)?;
                    }
                }
                Some(sampler) => {
                    let epoch_seed = rng::substream(self.hyper.seed, "mtl/triplet-seed", epoch as u64).next_u64();
                    let all = sampler.sample(epoch_seed);
                    let per = all.len().div_ceil(batches.len().max(1));
                    for (k, batch) in batches.iter().enumerate() {
                        let lo = (k * per).min(all.len());
                        let hi = ((k + 1) * per).min(all.len());
                        self.step_contrastive(batch, &all[lo..hi], epoch, &mut totals)?;
                    }
                }
            }
            let val = self.val_map()?;
            let (loss_main, loss_aux) = totals.means();
            log::debug!("epoch {epoch}: main {loss_main:.4} aux {loss_aux:.4} val {val:?}");
            log.push(EpochLog {
                epoch,
                loss_main,
                loss_aux,
                val_map: val,
                checksum: checksum(&self.model),
            });
            let score = val.unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, epoch, self.model.clone()));
            }
        }
        Ok(match best {
            Some((score, epoch, model)) => {
                self.model = model;
                (log, epoch, score.is_finite().then_some(score))
            }
            None => (log, 0, None),
        })
    }

    /// Stage one of the sequential regime: reconstruction only, `omega = 1`.
    fn pretrain_aux(&mut self, embeddings: &EmbeddingTable) -> Result<Vec<EpochLog>> {
        let factor = target_scale(embeddings, self.hyper.target_norm);
        let samples: Vec<Sample> = self
            .train_ids()
            .filter_map(|id| {
                embeddings.get(id).map(|q| Sample {
                    id: id.to_owned(),
                    labels: None,
                    aux: Some((scaled(q, factor), 1.0, 1.0)),
                })
            })
            .collect();
        let mut log = Vec::with_capacity(self.hyper.epochs_aux);
        for epoch in 1..=self.hyper.epochs_aux {
            let mut totals = EpochTotals::default();
            for batch in self.batches(&samples, "mtl/aux-epoch", epoch) {
                self.step_mtl(&batch, epoch, &mut totals)?;
            }
            log.push(EpochLog {
                epoch,
                loss_main: 0.0,
                loss_aux: totals.means().1,
                val_map: None,
                checksum: checksum(&self.model),
            });
        }
        Ok(log)
    }

    fn labeled_samples(&self) -> Vec<Sample> {
        self.train_ids()
            .filter_map(|id| {
                label_row(self.data.catalog, id).map(|labels| Sample {
                    id: id.to_owned(),
                    labels: Some(labels),
                    aux: None,
                })
            })
            .collect()
    }
}

fn outcome(
    trainer: Trainer<'_>,
    regime: Regime,
    initial_checksum: String,
    fitted: (Vec<EpochLog>, usize, Option<f64>),
    pretrain_log: Vec<EpochLog>,
    wasted_samples: usize,
) -> TrainOutcome {
    let (log, best_epoch, best_val_map) = fitted;
    TrainOutcome {
        model: trainer.model,
        regime,
        log,
        pretrain_log,
        best_epoch,
        best_val_map,
        wasted_samples,
        initial_checksum,
    }
}

fn require_labels(samples: &[Sample]) -> Result<()> {
    if samples.iter().all(|s| s.labels.is_none()) {
        return Err(Error::invalid("no labeled train items"));
    }
    Ok(())
}

/// Minimizes the mean main loss over labeled train items. The
/// reconstruction head is built with `cf_dim` outputs but never trained.
pub fn train_image_only(data: TrainData<'_>, hyper: &MtlHyper, cf_dim: usize) -> Result<TrainOutcome> {
    train_mtl_reconstruct(data, None, hyper, cf_dim)
}

/// Minimizes the mean multitask loss. Items without a label contribute only
/// the auxiliary term, items without an embedding or with zero effective
/// weight only the main term. `targets = None` trains the image-only model.
pub fn train_mtl_reconstruct(
    data: TrainData<'_>,
    targets: Option<(&EmbeddingTable, &WeightTable)>,
    hyper: &MtlHyper,
    cf_dim: usize,
) -> Result<TrainOutcome> {
    let targets = targets.filter(|(emb, _)| {
        if emb.is_empty() {
            log::warn!("empty embedding table: training reduces to image-only");
        }
        !emb.is_empty()
    });
    let cf_dim = targets.map_or(cf_dim, |(emb, _)| emb.dim());
    let mut trainer = Trainer::new(data, hyper, cf_dim)?;
    let factor = targets.map_or(1.0, |(emb, _)| target_scale(emb, hyper.target_norm));
    let mut samples = Vec::new();
    let mut wasted = 0;
    for id in trainer.train_ids() {
        let labels = label_row(data.catalog, id);
        let aux = targets.and_then(|(emb, weights)| {
            let q = emb.get(id)?;
            let omega = weights.omega(id);
            let scale = trainer.loss.aux_scale(omega);
            (scale > 0.0).then(|| (scaled(q, factor), omega, scale))
        });
        if labels.is_none() && aux.is_none() {
            wasted += 1;
            continue;
        }
        samples.push(Sample {
            id: id.to_owned(),
            labels,
            aux,
        });
    }
    require_labels(&samples)?;
    if wasted > 0 {
        log::info!("{wasted} train items have neither a label nor a CF target");
    }
    let regime = if targets.is_some() && hyper.alpha > 0.0 {
        Regime::MtlReconstruct
    } else {
        Regime::ImageOnly
    };
    let initial = checksum(&trainer.model);
    let fitted = trainer.fit(&samples, None, hyper.epochs)?;
    Ok(outcome(trainer, regime, initial, fitted, Vec::new(), wasted))
}

/// Main loss plus `alpha` times the mean triplet loss on predicted CF
/// vectors; triplets are mined on the train items' embeddings every epoch.
pub fn train_contrastive(data: TrainData<'_>, embeddings: &EmbeddingTable, hyper: &MtlHyper) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(data, hyper, embeddings.dim())?;
    let mut train_emb = EmbeddingTable::new(embeddings.dim(), embeddings.provenance.clone());
    for id in trainer.train_ids() {
        if let Some(q) = embeddings.get(id) {
            train_emb.insert(id, q.to_vec())?;
        }
    }
    let sampler = TripletSampler::new(&train_emb)?;
    let samples = trainer.labeled_samples();
    require_labels(&samples)?;
    let wasted = trainer.train_ids().count() - samples.len();
    let initial = checksum(&trainer.model);
    let fitted = trainer.fit(&samples, Some(&sampler), hyper.epochs)?;
    Ok(outcome(trainer, Regime::Contrastive, initial, fitted, Vec::new(), wasted))
}

/// `epochs_aux` epochs of reconstruction only, then `epochs` epochs of the
/// main loss with a fresh optimizer; model selection covers stage two only.
pub fn train_sequential(data: TrainData<'_>, embeddings: &EmbeddingTable, hyper: &MtlHyper) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(data, hyper, embeddings.dim())?;
    let samples = trainer.labeled_samples();
    require_labels(&samples)?;
    let initial = checksum(&trainer.model);
    let pretrain = trainer.pretrain_aux(embeddings)?;
    trainer.opt = Sgd::new(hyper.lr, hyper.momentum).with_weight_decay(hyper.weight_decay);
    let wasted = trainer.train_ids().count() - samples.len();
    let fitted = trainer.fit(&samples, None, hyper.epochs)?;
    Ok(outcome(trainer, Regime::Sequential, initial, fitted, pretrain, wasted))
}

/// Dispatches on `hyper.regime`. Weights are read by the reconstruction
/// regime only.
pub fn train(
    data: TrainData<'_>,
    embeddings: Option<&EmbeddingTable>,
    weights: Option<&WeightTable>,
    hyper: &MtlHyper,
    cf_dim: usize,
) -> Result<TrainOutcome> {
    let need = |what: &str| Error::invalid(format!("regime {} needs {what}", hyper.regime.name()));
    match hyper.regime {
        Regime::ImageOnly => train_image_only(data, hyper, cf_dim),
        Regime::MtlReconstruct => {
            let emb = embeddings.ok_or_else(|| need("embeddings"))?;
            let w = weights.ok_or_else(|| need("a weight table"))?;
            train_mtl_reconstruct(data, Some((emb, w)), hyper, cf_dim)
        }
        Regime::Contrastive => train_contrastive(data, embeddings.ok_or_else(|| need("embeddings"))?, hyper),
        Regime::Sequential => train_sequential(data, embeddings.ok_or_else(|| need("embeddings"))?, hyper),
    }
}
