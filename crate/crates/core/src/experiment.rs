//! In-memory experiment runs: data preparation, CF, weighting, training and
//! evaluation for one seed, plus the multi-seed studies built on them.

use std::time::Instant;

use ndarray::Array2;

use crate::cf::{self, CfKind, CfModel, EmbeddingTable};
use crate::config::{DataSource, ExperimentConfig};
use crate::data::{
    drop_labels, generate_synthetic, load_catalog, load_interactions, mask_heldout_interactions,
    split_interactions, split_items, ImageStore, InteractionMatrix, ItemCatalog, Role, SplitAssignment,
};
use crate::error::{Error, Result};
use crate::eval::ap::mean_average_precision;
use crate::eval::bootstrap::{bootstrap_ci, mean_ci, ConfidenceInterval};
use crate::eval::report::{Metrics, MetricsReport};
use crate::eval::sweep::{run_label_ratio_sweep, SweepOutcome};
use crate::eval::per_user_auc;
use crate::guidance::cf2label::{class_prior, probe_map, train_cf2label, Cf2LabelModel};
use crate::guidance::{weight_interaction, weight_lossbased, weight_uniform, WeightScheme, WeightTable};
use crate::mtl::{self, MtlModel, Regime, TrainData, TrainOutcome};

/// Compared phase-two methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    ImageOnly,
    MtlUniform,
    MtlInteraction,
    MtlLoss,
    Contrastive,
    Sequential,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::ImageOnly,
        Method::MtlUniform,
        Method::MtlInteraction,
        Method::MtlLoss,
        Method::Contrastive,
        Method::Sequential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ImageOnly => "Image-only",
            Method::MtlUniform => "MTL-reconstruct_uniform",
            Method::MtlInteraction => "MTL-reconstruct_interaction",
            Method::MtlLoss => "MTL-reconstruct_loss",
            Method::Contrastive => "Contrastive-loss",
            Method::Sequential => "Sequential",
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            Method::ImageOnly => Regime::ImageOnly,
            Method::MtlUniform | Method::MtlInteraction | Method::MtlLoss => Regime::MtlReconstruct,
            Method::Contrastive => Regime::Contrastive,
            Method::Sequential => Regime::Sequential,
        }
    }

    pub fn scheme(self) -> Option<WeightScheme> {
        match self {
            Method::MtlUniform => Some(WeightScheme::Uniform),
            Method::MtlInteraction => Some(WeightScheme::Interaction),
            Method::MtlLoss => Some(WeightScheme::Loss),
            _ => None,
        }
    }

    pub fn from_parts(regime: Regime, scheme: WeightScheme) -> Self {
        match (regime, scheme) {
            (Regime::ImageOnly, _) => Method::ImageOnly,
            (Regime::MtlReconstruct, WeightScheme::Uniform) => Method::MtlUniform,
            (Regime::MtlReconstruct, WeightScheme::Interaction) => Method::MtlInteraction,
            (Regime::MtlReconstruct, WeightScheme::Loss) => Method::MtlLoss,
            (Regime::Contrastive, _) => Method::Contrastive,
            (Regime::Sequential, _) => Method::Sequential,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// A loaded dataset before splitting.
pub struct Dataset {
    pub catalog: ItemCatalog,
    pub images: ImageStore,
    pub interactions: InteractionMatrix,
    /// Rendered images, kept for synthetic data so they can be written out.
    pub rgb: Option<Vec<(String, image::RgbImage)>>,
}

/// Loads or generates the dataset of a resolved config.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let d = &cfg.dataset;
    match d.source {
        DataSource::Synthetic => {
            let s = generate_synthetic(&d.synthetic)?;
            Ok(Dataset {
                catalog: s.catalog,
                images: s.images,
                interactions: s.interactions,
                rgb: Some(s.rgb),
            })
        }
        DataSource::Files => {
            let manifest = d.manifest.as_ref().ok_or_else(|| Error::Config("dataset.manifest is not set".into()))?;
            let interactions = d
                .interactions
                .as_ref()
                .ok_or_else(|| Error::Config("dataset.interactions is not set".into()))?;
            let image_dir = d
                .image_dir
                .clone()
                .unwrap_or_else(|| manifest.parent().unwrap_or(std::path::Path::new(".")).join("images"));
            let catalog = load_catalog(manifest, &image_dir)?;
            let images = ImageStore::load(&catalog, d.image_size)?;
            Ok(Dataset {
                catalog,
                images,
                interactions: load_interactions(interactions)?,
                rgb: None,
            })
        }
    }
}

/// Split data for one seed.
pub struct Prepared {
    pub config_hash: String,
    pub dataset_name: String,
    pub seed: u64,
    pub catalog: ItemCatalog,
    pub images: ImageStore,
    pub split: SplitAssignment,
    /// All interactions, including those of held-out items.
    pub interactions: InteractionMatrix,
    /// Interactions of train items only.
    pub masked: InteractionMatrix,
    /// `masked` minus the interactions held out for CF evaluation.
    pub cf_train: InteractionMatrix,
    pub cf_test: InteractionMatrix,
}

impl Prepared {
    pub fn data(&self) -> TrainData<'_> {
        self.data_with(&self.catalog)
    }

    /// Train data whose labels come from `catalog` (e.g. after dropping labels).
    pub fn data_with<'a>(&'a self, catalog: &'a ItemCatalog) -> TrainData<'a> {
        TrainData {
            catalog,
            split: &self.split,
            images: &self.images,
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let cfg = cfg.resolved();
    prepare_from(&cfg, load_dataset(&cfg)?)
}

pub fn prepare_from(cfg: &ExperimentConfig, dataset: Dataset) -> Result<Prepared> {
    let split = split_items(&dataset.catalog, cfg.dataset.holdout_ratio, cfg.seed)?;
    let masked = mask_heldout_interactions(&dataset.interactions, &split);
    let (cf_train, cf_test) = split_interactions(&masked, cfg.dataset.interaction_test_ratio, cfg.seed)?;
    Ok(Prepared {
        config_hash: cfg.hash(),
        dataset_name: cfg.dataset.name.clone(),
        seed: cfg.seed,
        catalog: dataset.catalog,
        images: dataset.images,
        split,
        interactions: dataset.interactions,
        masked,
        cf_train,
        cf_test,
    })
}

/// A trained CF model with its recommendation accuracy.
pub struct CfStage {
    pub model: CfModel,
    pub embeddings: Option<EmbeddingTable>,
    /// Mean per-user AUC on the held-out interactions.
    pub auc: f64,
    pub auc_ci: ConfidenceInterval,
    pub per_user_auc: Vec<f64>,
}

pub fn run_cf(prepared: &Prepared, cfg: &ExperimentConfig, kind: CfKind) -> Result<CfStage> {
    let model = cf::train(kind, &prepared.cf_train, &cfg.cf.hyper(kind, cfg.seed))?;
    let per_user: Vec<f64> = per_user_auc(&model, &prepared.cf_train, &prepared.cf_test)?
        .into_iter()
        .map(|(_, a)| a)
        .collect();
    let auc = per_user.iter().sum::<f64>() / per_user.len() as f64;
    let auc_ci = mean_ci(&per_user, cfg.eval.bootstrap, cfg.eval.level, cfg.seed)?;
    let embeddings = match kind {
        CfKind::Popularity => None,
        _ => Some(model.extract_item_embeddings(&cfg.short_hash())?),
    };
    Ok(CfStage {
        model,
        embeddings,
        auc,
        auc_ci,
        per_user_auc: per_user,
    })
}

/// Item weights of `scheme`; the loss scheme also returns its probe.
pub fn build_weights(
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    embeddings: &EmbeddingTable,
    scheme: WeightScheme,
) -> Result<(WeightTable, Option<Cf2LabelModel>)> {
    let table = match scheme {
        WeightScheme::Uniform => weight_uniform(prepared.catalog.item_ids(), embeddings),
        WeightScheme::Interaction => weight_interaction(&prepared.cf_train, embeddings),
        WeightScheme::Loss => {
            let (probe, _) = train_cf2label(embeddings, &prepared.catalog, &prepared.split, &cfg.guidance.probe)?;
            let table = weight_lossbased(&probe, embeddings, &prepared.catalog)?;
            for w in &table.warnings {
                log::warn!("{w}");
            }
            return Ok((table, Some(probe)));
        }
    };
    Ok((table, None))
}

/// Trains `method` on `data` with the experiment's phase-two settings.
pub fn train_method(
    data: TrainData<'_>,
    cfg: &ExperimentConfig,
    method: Method,
    embeddings: Option<&EmbeddingTable>,
    weights: Option<&WeightTable>,
) -> Result<TrainOutcome> {
    let mut hyper = cfg.mtl.clone();
    hyper.regime = method.regime();
    hyper.seed = cfg.seed;
    let cf_dim = embeddings.map_or(cfg.cf.factors(), EmbeddingTable::dim);
    mtl::train(data, embeddings, weights, &hyper, cf_dim)
}

/// Labeled items of `role` with their probabilities under `model`.
pub fn score_role(model: &MtlModel, prepared: &Prepared, role: Role) -> Result<(Vec<String>, Array2<f64>, Array2<bool>)> {
    let ids: Vec<&str> = prepared
        .catalog
        .records()
        .iter()
        .filter(|r| r.is_labeled() && prepared.split.role(&r.item_id) == Some(role))
        .map(|r| r.item_id.as_str())
        .collect();
    if ids.is_empty() {
        return Err(Error::invalid(format!("no labeled {role:?} items")));
    }
    let scores = mtl::score_items(model, &prepared.images, &ids)?;
    let labels = Array2::from_shape_fn((ids.len(), prepared.catalog.num_classes()), |(b, n)| {
        prepared.catalog.get(ids[b]).and_then(|r| r.labels.as_ref()).is_some_and(|l| l[n])
    });
    Ok((ids.into_iter().map(str::to_owned).collect(), scores, labels))
}

/// mAP of an item-by-class score matrix with a bootstrap interval over items.
pub fn map_with_ci(
    scores: &Array2<f64>,
    labels: &Array2<bool>,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(Metrics, ConfidenceInterval)> {
    let full = mean_average_precision(scores, labels, None)?;
    let rows: Vec<usize> = (0..scores.nrows()).collect();
    let ci = bootstrap_ci(
        &rows,
        |sample| {
            let s = Array2::from_shape_fn((sample.len(), scores.ncols()), |(b, n)| scores[[*sample[b], n]]);
            let l = Array2::from_shape_fn((sample.len(), labels.ncols()), |(b, n)| labels[[*sample[b], n]]);
            mean_average_precision(&s, &l, None).ok().map(|r| r.map)
        },
        resamples,
        level,
        seed,
    )?;
    Ok((
        Metrics {
            map: full.map,
            per_class_ap: full.per_class,
            auc: None,
            label_ratio: None,
        },
        ci,
    ))
}

/// Test-set report for a trained model.
pub fn evaluate_model(
    model: &MtlModel,
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    experiment: &str,
    method: &str,
) -> Result<MetricsReport> {
    let (_, scores, labels) = score_role(model, prepared, Role::Test)?;
    let (metrics, ci) = map_with_ci(&scores, &labels, cfg.eval.bootstrap, cfg.eval.level, cfg.seed)?;
    let mut report = MetricsReport::new(experiment, method, &prepared.dataset_name, cfg.seed, metrics);
    report.ci = Some(ci);
    report.config_hash = prepared.config_hash.clone();
    report.split_hash = prepared.split.hash();
    Ok(report)
}

/// Trains and evaluates every method in `methods` on one seed.
pub fn run_comparison(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<MetricsReport>> {
    let cfg = cfg.resolved();
    let prepared = prepare(&cfg)?;
    let needs_cf = methods.iter().any(|m| m.regime().needs_embeddings());
    let stage = needs_cf.then(|| run_cf(&prepared, &cfg, cfg.cf.kind)).transpose()?;
    let embeddings = stage.as_ref().and_then(|s| s.embeddings.as_ref());
    let mut reports = Vec::with_capacity(methods.len());
    for &m in methods {
        let start = Instant::now();
        let weights = match (m.scheme(), embeddings) {
            (Some(s), Some(e)) => Some(build_weights(&prepared, &cfg, e, s)?.0),
            _ => None,
        };
        let emb = embeddings.filter(|_| m.regime().needs_embeddings());
        let outcome = train_method(prepared.data(), &cfg, m, emb, weights.as_ref())?;
        let mut report = evaluate_model(&outcome.model, &prepared, &cfg, "comparison", m.name())?;
        report.wall_clock_secs = start.elapsed().as_secs_f64();
        log::info!("seed {} {}: test mAP {:.4}", cfg.seed, m.name(), report.metrics.map);
        reports.push(report);
    }
    Ok(reports)
}

/// CF2Label against the class-frequency prior on test items.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeStudy {
    pub probe_map: f64,
    pub prior_map: f64,
    pub items: usize,
}

/// Trains a VAE on all interactions, fits CF2Label on train items' vectors
/// and scores test items.
pub fn probe_study(cfg: &ExperimentConfig) -> Result<ProbeStudy> {
    let cfg = cfg.resolved();
    let prepared = prepare(&cfg)?;
    let model = cf::train(CfKind::Vae, &prepared.interactions, &cfg.cf.hyper(CfKind::Vae, cfg.seed))?;
    let embeddings = model.extract_item_embeddings(&cfg.short_hash())?;
    let (probe, _) = train_cf2label(&embeddings, &prepared.catalog, &prepared.split, &cfg.guidance.probe)?;
    let probe_map = probe_map(&probe, &embeddings, &prepared.catalog, &prepared.split, Role::Test)
        .ok_or_else(|| Error::invalid("no test items with embeddings and labels"))?;
    let ids: Vec<&str> = prepared
        .catalog
        .records()
        .iter()
        .filter(|r| r.is_labeled() && prepared.split.role(&r.item_id) == Some(Role::Test))
        .filter(|r| embeddings.get(&r.item_id).is_some())
        .map(|r| r.item_id.as_str())
        .collect();
    let prior = class_prior(&prepared.catalog, &prepared.split);
    let scores = Array2::from_shape_fn((ids.len(), prior.len()), |(_, n)| prior[n]);
    let labels = Array2::from_shape_fn((ids.len(), prior.len()), |(b, n)| {
        prepared.catalog.get(ids[b]).and_then(|r| r.labels.as_ref()).is_some_and(|l| l[n])
    });
    let prior_map = mean_average_precision(&scores, &labels, None)?.map;
    Ok(ProbeStudy {
        probe_map,
        prior_map,
        items: ids.len(),
    })
}

/// Image-only against MTL-reconstruct with uniform weights as train labels
/// are removed. Data, split and CF vectors depend only on the seed, so every
/// ratio of a seed shares them.
pub fn label_ratio_sweep(cfg: &ExperimentConfig, ratios: &[f64], seeds: &[u64]) -> Result<SweepOutcome> {
    let mut current: Option<(u64, ExperimentConfig, Prepared, EmbeddingTable)> = None;
    run_label_ratio_sweep(ratios, seeds, |ratio, seed| {
        if current.as_ref().is_none_or(|c| c.0 != seed) {
            let cfg = cfg.with_seed(seed);
            let prepared = prepare(&cfg)?;
            let emb = run_cf(&prepared, &cfg, cfg.cf.kind)?
                .embeddings
                .ok_or_else(|| Error::Config("label-ratio sweep needs a CF model with item vectors".into()))?;
            current = Some((seed, cfg, prepared, emb));
        }
        let (_, cfg, prepared, emb) = current.as_ref().expect("prepared above");
        let dropped = drop_labels(&prepared.catalog, ratio, seed, &prepared.split)?;
        for w in &dropped.warnings {
            log::warn!("{w}");
        }
        let data = prepared.data_with(&dropped.catalog);
        let weights = weight_uniform(prepared.catalog.item_ids(), emb);
        let mut reports = Vec::with_capacity(2);
        for (method, targets) in [(Method::ImageOnly, None), (Method::MtlUniform, Some(emb))] {
            let start = Instant::now();
            let outcome = train_method(data, cfg, method, targets, targets.map(|_| &weights))?;
            let mut r = evaluate_model(&outcome.model, prepared, cfg, "label_ratio", method.name())?;
            r.metrics.label_ratio = Some(ratio);
            r.wall_clock_secs = start.elapsed().as_secs_f64();
            reports.push(r);
        }
        Ok(reports)
    })
}
