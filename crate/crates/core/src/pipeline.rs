//! Stage-wise commands over an output directory. Each stage reads what the
//! earlier stages wrote and records its own files, with their digests and the
//! config hash, in `stages/<stage>.json`.
//!
//! ```text
//! <out>/seed-<seed>/
//!     data/                 manifest.tsv, interactions.tsv, images/ (synthetic)
//!     prepare/              splits.json, train.tsv, test.tsv
//!     cf/                   model.ckpt, embeddings.tsv, results.json
//!     weights/              <scheme>.tsv, cf2label.ckpt
//!     train/<method>/       model.ckpt, log.csv, checksums.tsv, run.json
//!     eval/                 results.json, tables/, figures/
//!     stages/               one record per completed stage
//! <out>/sweep/              manifest.json, results.json, tables/, figures/
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::cf::{CfKind, EmbeddingTable};
use crate::config::ExperimentConfig;
use crate::data::images::write_png;
use crate::data::SplitAssignment;
use crate::error::{Error, Result};
use crate::eval::report::ReportFiles;
use crate::eval::{render_report, ConfidenceInterval, SweepOutcome};
use crate::experiment::{
    build_weights, evaluate_model, label_ratio_sweep, load_dataset, prepare, prepare_from, run_cf, train_method, Method,
    Prepared,
};
use crate::guidance::{WeightScheme, WeightTable};
use crate::mtl::train::log_csv;
use crate::mtl::{MtlModel, Regime, TrainOutcome};
use crate::nn::params::to_named;
use crate::nn::Checkpoint;

/// Environment variable naming the output root when `--out` is not given.
pub const OUT_ENV: &str = "CACTUS_OUT";
pub const DEFAULT_OUT: &str = "runs";

/// `flag`, else `$CACTUS_OUT`, else `runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Paths of one seed's artifacts.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(out: &Path, seed: u64) -> Self {
        Self {
            root: out.join(format!("seed-{seed}")),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn splits(&self) -> PathBuf {
        self.root.join("prepare").join("splits.json")
    }

    pub fn cf_train(&self) -> PathBuf {
        self.root.join("prepare").join("train.tsv")
    }

    pub fn cf_test(&self) -> PathBuf {
        self.root.join("prepare").join("test.tsv")
    }

    pub fn cf_dir(&self) -> PathBuf {
        self.root.join("cf")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.cf_dir().join("embeddings.tsv")
    }

    pub fn weights(&self, scheme: WeightScheme) -> PathBuf {
        self.root.join("weights").join(format!("{}.tsv", scheme.name()))
    }

    pub fn train_dir(&self, method: Method) -> PathBuf {
        self.root.join("train").join(method.name())
    }

    pub fn checkpoint(&self, method: Method) -> PathBuf {
        self.train_dir(method).join("model.ckpt")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    fn stage_record(&self, stage: &str) -> PathBuf {
        self.root.join("stages").join(format!("{stage}.json"))
    }
}

pub fn sweep_dir(out: &Path) -> PathBuf {
    out.join("sweep")
}

/// What a stage wrote and under which configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    pub split_hash: String,
    pub seed: u64,
    /// Path relative to the seed directory → SHA-256 of the file bytes.
    pub files: BTreeMap<String, String>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn put(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Collects files written by one stage and records them at the end.
struct StageWriter<'a> {
    layout: &'a Layout,
    record: StageRecord,
}

impl<'a> StageWriter<'a> {
    fn new(layout: &'a Layout, stage: &str, cfg: &ExperimentConfig, split_hash: &str) -> Self {
        Self {
            layout,
            record: StageRecord {
                stage: stage.to_owned(),
                config_hash: cfg.hash(),
                split_hash: split_hash.to_owned(),
                seed: cfg.seed,
                files: BTreeMap::new(),
            },
        }
    }

    fn put(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        put(path, bytes)?;
        self.track(path, bytes);
        Ok(())
    }

    /// Records a file written by someone else.
    fn track_file(&mut self, path: &Path) -> Result<()> {
        let bytes = read(path)?;
        self.track(path, &bytes);
        Ok(())
    }

    fn track(&mut self, path: &Path, bytes: &[u8]) {
        let rel = path.strip_prefix(&self.layout.root).unwrap_or(path);
        let key = rel.to_string_lossy().replace('\\', "/");
        self.record.files.insert(key, digest(bytes));
    }

    fn finish(self) -> Result<StageRecord> {
        let path = self.layout.stage_record(&self.record.stage);
        put(&path, (serde_json::to_string_pretty(&self.record)? + "\n").as_bytes())?;
        Ok(self.record)
    }
}

/// Reads the record of `stage` and checks every listed file is unchanged.
pub fn read_stage(layout: &Layout, stage: &str, command: &str) -> Result<StageRecord> {
    let path = layout.stage_record(stage);
    if !path.exists() {
        return Err(Error::Config(format!(
            "no `{stage}` artifacts under {}; run `cactus {command}` first",
            layout.root.display()
        )));
    }
    let record: StageRecord = serde_json::from_slice(&read(&path)?)?;
    for (rel, want) in &record.files {
        let file = layout.root.join(rel);
        let bytes = read(&file)?;
        if digest(&bytes) != *want {
            return Err(Error::invalid(format!(
                "{} changed after `cactus {command}` wrote it; rerun that stage",
                file.display()
            )));
        }
    }
    Ok(record)
}

fn warn_if_stale(record: &StageRecord, cfg: &ExperimentConfig) {
    let now = cfg.hash();
    if record.config_hash != now {
        log::warn!(
            "`{}` artifacts come from config {}, current config is {}",
            record.stage,
            &record.config_hash[..16],
            &now[..16]
        );
    }
}

/// Generates or loads the dataset, splits it and writes the split and the
/// CF train/test interaction files (plus the dataset itself when synthetic).
pub fn cmd_prepare(cfg: &ExperimentConfig, layout: &Layout) -> Result<Prepared> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let dataset = load_dataset(&cfg)?;
    let data_dir = layout.data_dir();
    let mut data_files = Vec::new();
    if let Some(rgb) = &dataset.rgb {
        let images = data_dir.join("images");
        std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        for (id, img) in rgb {
            write_png(&images.join(format!("{id}.png")), img)?;
        }
        let manifest = data_dir.join("manifest.tsv");
        put(&manifest, dataset.catalog.to_manifest().as_bytes())?;
        let interactions = data_dir.join("interactions.tsv");
        put(&interactions, dataset.interactions.to_tsv().as_bytes())?;
        data_files.extend([manifest, interactions]);
    }
    let prepared = prepare_from(&cfg, dataset)?;
    let mut w = StageWriter::new(layout, "prepare", &cfg, &prepared.split.hash());
    for f in &data_files {
        w.track_file(f)?;
    }
    w.put(&layout.splits(), prepared.split.to_json()?.as_bytes())?;
    w.put(&layout.cf_train(), prepared.cf_train.to_tsv().as_bytes())?;
    w.put(&layout.cf_test(), prepared.cf_test.to_tsv().as_bytes())?;
    w.finish()?;
    log::info!(
        "prepared {} items ({} train / {} val / {} test), {} CF train and {} CF test interactions",
        prepared.catalog.len(),
        prepared.split.count(crate::data::Role::Train),
        prepared.split.count(crate::data::Role::Val),
        prepared.split.count(crate::data::Role::Test),
        prepared.cf_train.num_entries(),
        prepared.cf_test.num_entries()
    );
    Ok(prepared)
}

/// Rebuilds the prepared data and checks it against the files of
/// [`cmd_prepare`].
pub fn load_prepared(cfg: &ExperimentConfig, layout: &Layout) -> Result<Prepared> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let record = read_stage(layout, "prepare", "prepare")?;
    warn_if_stale(&record, &cfg);
    let prepared = prepare(&cfg)?;
    let on_disk = SplitAssignment::read(&layout.splits())?;
    let train = read(&layout.cf_train())?;
    if on_disk != prepared.split || train != prepared.cf_train.to_tsv().as_bytes() {
        return Err(Error::Config(format!(
            "prepared data under {} does not match the current dataset settings; rerun `cactus prepare`",
            layout.root.display()
        )));
    }
    Ok(prepared)
}

/// Recommendation accuracy of one CF model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub model: String,
    pub auc: f64,
    pub ci: ConfidenceInterval,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfResults {
    pub dataset: String,
    pub seed: u64,
    pub config_hash: String,
    pub split_hash: String,
    pub models: Vec<AucRow>,
}

/// Trains the configured CF model, writes its checkpoint and item vectors,
/// and reports its AUC next to the popularity baseline.
pub fn cmd_train_cf(cfg: &ExperimentConfig, layout: &Layout) -> Result<CfResults> {
    let cfg = cfg.resolved();
    let prepared = load_prepared(&cfg, layout)?;
    let kind = cfg.cf.kind;
    let mut kinds = vec![kind];
    if kind != CfKind::Popularity {
        kinds.push(CfKind::Popularity);
    }
    let mut w = StageWriter::new(layout, "train-cf", &cfg, &prepared.split.hash());
    let mut models = Vec::new();
    for k in kinds {
        let stage = run_cf(&prepared, &cfg, k)?;
        log::info!("{}: AUC {:.4} [{:.4}, {:.4}]", k.name(), stage.auc, stage.auc_ci.lo, stage.auc_ci.hi);
        models.push(AucRow {
            model: k.name().to_owned(),
            auc: stage.auc,
            ci: stage.auc_ci,
            users: stage.per_user_auc.len(),
        });
        if k != kind {
            continue;
        }
        w.put(&layout.cf_dir().join("model.ckpt"), &stage.model.to_checkpoint().to_bytes())?;
        match &stage.embeddings {
            Some(e) => w.put(&layout.embeddings(), e.to_tsv().as_bytes())?,
            None => log::warn!("{} has no item vectors; only image_only training is possible", k.name()),
        }
    }
    let results = CfResults {
        dataset: prepared.dataset_name.clone(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        split_hash: prepared.split.hash(),
        models,
    };
    w.put(
        &layout.cf_dir().join("results.json"),
        (serde_json::to_string_pretty(&results)? + "\n").as_bytes(),
    )?;
    w.finish()?;
    Ok(results)
}

fn read_embeddings(layout: &Layout) -> Result<EmbeddingTable> {
    read_stage(layout, "train-cf", "train-cf")?;
    let path = layout.embeddings();
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} is missing; train a CF model with item vectors (cf.kind = \"vae\" or \"bpr\")",
            path.display()
        )));
    }
    EmbeddingTable::read(&path)
}

/// Builds the weight table of `guidance.scheme`. The loss scheme trains its
/// CF2Label probe here and saves it next to the table.
pub fn cmd_weights(cfg: &ExperimentConfig, layout: &Layout) -> Result<WeightTable> {
    let cfg = cfg.resolved();
    let prepared = load_prepared(&cfg, layout)?;
    let embeddings = read_embeddings(layout)?;
    let scheme = cfg.guidance.scheme;
    let (table, probe) = build_weights(&prepared, &cfg, &embeddings, scheme)?;
    let mut w = StageWriter::new(layout, &format!("weights-{}", scheme.name()), &cfg, &prepared.split.hash());
    w.put(&layout.weights(scheme), table.to_tsv().as_bytes())?;
    if let Some(probe) = probe {
        let meta = json!({ "kind": "cf2label", "config_hash": cfg.hash() });
        let ck = Checkpoint::new(meta, to_named(&probe, ""));
        w.put(&layout.root.join("weights").join("cf2label.ckpt"), &ck.to_bytes())?;
    }
    w.finish()?;
    log::info!("{} weights for {} items", scheme.name(), table.len());
    Ok(table)
}

/// Summary written as `run.json` next to a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub split_hash: String,
    pub best_epoch: usize,
    pub best_val_map: Option<f64>,
    pub wasted_samples: usize,
    pub wall_clock_secs: f64,
}

fn checksums_tsv(outcome: &TrainOutcome) -> String {
    let mut out = format!("0\t{}\n", outcome.initial_checksum);
    for e in outcome.pretrain_log.iter().chain(&outcome.log) {
        let _ = writeln!(out, "{}\t{}", e.epoch, e.checksum);
    }
    out
}

/// Trains the method selected by `mtl.regime` and `guidance.scheme`.
pub fn cmd_train(cfg: &ExperimentConfig, layout: &Layout) -> Result<RunSummary> {
    let cfg = cfg.resolved();
    let method = Method::from_parts(cfg.mtl.regime, cfg.guidance.scheme);
    let prepared = load_prepared(&cfg, layout)?;
    let mut missing = Vec::new();
    let regime = method.regime();
    let embeddings = if regime.needs_embeddings() {
        match read_embeddings(layout) {
            Ok(e) => Some(e),
            Err(e) if e.is_validation() => {
                missing.push(format!("{} (`cactus train-cf`)", layout.embeddings().display()));
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let weights = match method.scheme().filter(|_| regime == Regime::MtlReconstruct) {
        Some(scheme) => {
            let stage = format!("weights-{}", scheme.name());
            match read_stage(layout, &stage, "weights") {
                Ok(_) => Some(WeightTable::read(&layout.weights(scheme))?),
                Err(e) if e.is_validation() => {
                    missing.push(format!("{} (`cactus weights`)", layout.weights(scheme).display()));
                    None
                }
                Err(e) => return Err(e),
            }
        }
        None => None,
    };
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "regime {} is missing inputs: {}",
            regime.name(),
            missing.join(", ")
        )));
    }

    let start = Instant::now();
    let outcome = train_method(prepared.data(), &cfg, method, embeddings.as_ref(), weights.as_ref())?;
    let summary = RunSummary {
        method: method.name().to_owned(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        split_hash: prepared.split.hash(),
        best_epoch: outcome.best_epoch,
        best_val_map: outcome.best_val_map,
        wasted_samples: outcome.wasted_samples,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    let dir = layout.train_dir(method);
    let mut w = StageWriter::new(layout, &format!("train-{}", method.name()), &cfg, &summary.split_hash);
    let meta = json!({
        "method": summary.method,
        "seed": summary.seed,
        "config_hash": summary.config_hash,
        "split_hash": summary.split_hash,
        "best_epoch": summary.best_epoch,
    });
    w.put(&layout.checkpoint(method), &outcome.model.to_checkpoint(meta).to_bytes())?;
    w.put(&dir.join("log.csv"), log_csv(&outcome.log).as_bytes())?;
    if !outcome.pretrain_log.is_empty() {
        w.put(&dir.join("pretrain_log.csv"), log_csv(&outcome.pretrain_log).as_bytes())?;
    }
    w.put(&dir.join("checksums.tsv"), checksums_tsv(&outcome).as_bytes())?;
    put(&dir.join("run.json"), (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    w.finish()?;
    log::info!(
        "{}: best epoch {} (val mAP {:?}) in {:.1}s",
        summary.method,
        summary.best_epoch,
        summary.best_val_map,
        summary.wall_clock_secs
    );
    Ok(summary)
}

fn discover_checkpoints(layout: &Layout) -> Vec<PathBuf> {
    let dir = layout.root.join("train");
    let Ok(entries) = std::fs::read_dir(&dir) else {
        return Vec::new();
    };
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("model.ckpt"))
        .filter(|p| p.is_file())
        .collect();
    found.sort();
    found
}

/// Evaluates checkpoints on the test split and renders the report. With no
/// explicit checkpoints every model under `train/` is evaluated.
pub fn cmd_evaluate(cfg: &ExperimentConfig, layout: &Layout, checkpoints: &[PathBuf]) -> Result<ReportFiles> {
    let cfg = cfg.resolved();
    let prepared = load_prepared(&cfg, layout)?;
    let paths = if checkpoints.is_empty() {
        discover_checkpoints(layout)
    } else {
        checkpoints.to_vec()
    };
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no checkpoints under {}; run `cactus train` first",
            layout.root.join("train").display()
        )));
    }
    let split_hash = prepared.split.hash();
    let mut reports = Vec::with_capacity(paths.len());
    for path in &paths {
        let (model, meta) = MtlModel::load(path)?;
        let theirs = meta["split_hash"].as_str().unwrap_or("");
        if theirs != split_hash {
            return Err(Error::invalid(format!(
                "{} was trained on split {theirs}, not the prepared split {split_hash}; refusing to compare",
                path.display()
            )));
        }
        let method = meta["method"].as_str().unwrap_or("unknown");
        let mut report = evaluate_model(&model, &prepared, &cfg, "comparison", method)?;
        if let Some(h) = meta["config_hash"].as_str() {
            report.config_hash = h.to_owned();
        }
        log::info!("{method}: test mAP {:.4}", report.metrics.map);
        reports.push(report);
    }
    render_report(&reports, &cfg.eval.baseline, &layout.eval_dir())
}

/// Runs the label-ratio sweep over `eval.ratios` × `eval.seeds`. On abort the
/// manifest and the partial report are still written before the error.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepOutcome> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let dir = sweep_dir(out);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let outcome = label_ratio_sweep(&cfg, &cfg.eval.ratios, &cfg.eval.seeds)?;
    outcome.write_manifest(&dir.join("manifest.json"))?;
    if !outcome.reports.is_empty() {
        render_report(&outcome.reports, &cfg.eval.baseline, &dir)?;
    }
    if let Some(f) = &outcome.failure {
        return Err(Error::Runtime(format!(
            "sweep aborted at ratio {} seed {}: {}; partial results in {}",
            f.ratio,
            f.seed,
            f.error,
            dir.display()
        )));
    }
    Ok(outcome)
}
