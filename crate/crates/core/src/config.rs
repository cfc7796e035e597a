//! Experiment configuration: one TOML document, every field defaulted,
//! unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cf::{CfHyper, CfKind};
use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::eval::sweep::DEFAULT_RATIOS;
use crate::guidance::{Cf2LabelHyper, WeightScheme};
use crate::mtl::MtlHyper;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// Label used in reports and tables.
    pub name: String,
    pub synthetic: SyntheticConfig,
    /// `item_id<TAB>labels` manifest (files source).
    pub manifest: Option<PathBuf>,
    /// `user_id<TAB>item_id` interactions (files source).
    pub interactions: Option<PathBuf>,
    /// Directory holding `<item_id>.png` (files source).
    pub image_dir: Option<PathBuf>,
    /// Images are resized to this side length.
    pub image_size: usize,
    /// Fraction of items held out for validation plus test.
    pub holdout_ratio: f64,
    /// Fraction of train interactions held out to measure CF AUC.
    pub interaction_test_ratio: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            name: "synthetic".into(),
            synthetic: SyntheticConfig::default(),
            manifest: None,
            interactions: None,
            image_dir: None,
            image_size: 16,
            holdout_ratio: 0.3,
            interaction_test_ratio: 0.2,
        }
    }
}

/// BPR hyperparameters; the fields BPR reads from [`CfHyper`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BprConfig {
    pub factors: usize,
    pub lr: f64,
    pub epochs: usize,
    pub reg: f64,
    pub negatives: usize,
}

impl Default for BprConfig {
    fn default() -> Self {
        let h = CfHyper::bpr_default();
        Self {
            factors: h.factors,
            lr: h.lr,
            epochs: h.epochs,
            reg: h.reg,
            negatives: h.negatives,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfConfig {
    /// Model whose item vectors feed phase two.
    pub kind: CfKind,
    pub vae: CfHyper,
    pub bpr: BprConfig,
}

impl Default for CfConfig {
    fn default() -> Self {
        Self {
            kind: CfKind::Vae,
            vae: CfHyper::default(),
            bpr: BprConfig::default(),
        }
    }
}

impl CfConfig {
    pub fn hyper(&self, kind: CfKind, seed: u64) -> CfHyper {
        let mut h = match kind {
            CfKind::Bpr => CfHyper {
                factors: self.bpr.factors,
                lr: self.bpr.lr,
                epochs: self.bpr.epochs,
                reg: self.bpr.reg,
                negatives: self.bpr.negatives,
                ..CfHyper::bpr_default()
            },
            _ => self.vae.clone(),
        };
        h.seed = seed;
        h
    }

    /// Dimension `f` of the item vectors of `self.kind`.
    pub fn factors(&self) -> usize {
        match self.kind {
            CfKind::Bpr => self.bpr.factors,
            _ => self.vae.factors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    pub scheme: WeightScheme,
    pub probe: Cf2LabelHyper,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            scheme: WeightScheme::Uniform,
            probe: Cf2LabelHyper::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Bootstrap resamples.
    pub bootstrap: usize,
    /// Confidence level of bootstrap intervals.
    pub level: f64,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Method that relative columns and p-values refer to.
    pub baseline: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bootstrap: 1000,
            level: 0.95,
            ratios: DEFAULT_RATIOS.to_vec(),
            seeds: (0..5).collect(),
            baseline: "Image-only".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub cf: CfConfig,
    pub guidance: GuidanceConfig,
    pub mtl: MtlHyper,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Relative dataset paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.dataset.manifest,
            &mut self.dataset.interactions,
            &mut self.dataset.image_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.source == DataSource::Files && (d.manifest.is_none() || d.interactions.is_none()) {
            return Err(Error::Config(
                "dataset.source = \"files\" needs dataset.manifest and dataset.interactions".into(),
            ));
        }
        if !(d.holdout_ratio > 0.0 && d.holdout_ratio < 1.0) {
            return Err(Error::Config("dataset.holdout_ratio must be in (0, 1)".into()));
        }
        if !(d.interaction_test_ratio > 0.0 && d.interaction_test_ratio < 1.0) {
            return Err(Error::Config("dataset.interaction_test_ratio must be in (0, 1)".into()));
        }
        if d.image_size < 4 {
            return Err(Error::Config("dataset.image_size must be >= 4".into()));
        }
        self.cf.vae.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.cf.bpr.factors == 0 || self.cf.bpr.epochs == 0 {
            return Err(Error::Config("cf.bpr.factors and cf.bpr.epochs must be >= 1".into()));
        }
        if self.cf.kind == CfKind::Popularity && self.mtl.regime.needs_embeddings() {
            return Err(Error::Config(format!(
                "cf.kind = \"popularity\" has no item vectors for regime {}",
                self.mtl.regime.name()
            )));
        }
        self.mtl.validate()?;
        let e = &self.eval;
        if e.bootstrap < 100 {
            return Err(Error::Config("eval.bootstrap must be >= 100".into()));
        }
        if !(e.level > 0.0 && e.level < 1.0) {
            return Err(Error::Config("eval.level must be in (0, 1)".into()));
        }
        if e.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::Config("eval.ratios must lie in (0, 1]".into()));
        }
        if e.seeds.is_empty() {
            return Err(Error::Config("eval.seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Copy with the experiment seed pushed into every section.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.dataset.synthetic.seed = seed;
        c.cf.vae.seed = seed;
        c.guidance.probe.seed = seed;
        c.mtl.seed = seed;
        c.dataset.synthetic.image_size = c.dataset.image_size;
        c
    }

    /// Copy with the experiment seed applied to every section.
    pub fn resolved(&self) -> Self {
        self.with_seed(self.seed)
    }

    /// SHA-256 of the canonical JSON form (object keys sorted).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    /// First 16 hex digits of [`hash`](Self::hash), used in file metadata.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_owned()
    }
}
