//! Shared encoder with a classification head and a CF-reconstruction head.

use std::path::Path;

use ndarray::Array2;
use serde_json::{json, Value};

use super::encoder::{EncoderCache, EncoderPreset, ImageEncoder};
use crate::data::ImageStore;
use crate::error::{Error, Result};
use crate::nn::activation::sigmoid;
use crate::nn::params::{join, load_named, to_named, Parameters};
use crate::nn::{Checkpoint, Linear};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MtlModel {
    pub encoder: ImageEncoder,
    /// `D -> N`, sigmoid outputs.
    pub class_head: Linear,
    /// `D -> f`, linear outputs.
    pub recon_head: Linear,
}

/// Activations of one batch.
pub struct Forward {
    pub features: Array2<f64>,
    pub y_hat: Array2<f64>,
    pub q_hat: Array2<f64>,
    cache: EncoderCache,
}

impl Parameters for MtlModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.class_head.visit(&join(prefix, "class_head"), f);
        self.recon_head.visit(&join(prefix, "recon_head"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder.visit_mut(f);
        self.class_head.visit_mut(f);
        self.recon_head.visit_mut(f);
    }
}

impl MtlModel {
    pub fn new(preset: &EncoderPreset, side: usize, classes: usize, cf_dim: usize, seed: u64) -> Result<Self> {
        if classes == 0 || cf_dim == 0 {
            return Err(Error::invalid("model needs at least one class and a non-empty CF dimension"));
        }
        let mut r = rng::stream(seed, "mtl/init");
        let encoder = ImageEncoder::new(preset, side, &mut r)?;
        let d = encoder.output_dim();
        Ok(Self {
            class_head: Linear::new(d, classes, 1.0, &mut r),
            recon_head: Linear::new(d, cf_dim, 1.0, &mut r),
            encoder,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_head.output_dim()
    }

    pub fn cf_dim(&self) -> usize {
        self.recon_head.output_dim()
    }

    pub fn forward(&self, images: &[&[f64]]) -> Forward {
        let (features, cache) = self.encoder.forward(images);
        let y_hat = self.class_head.forward(&features).mapv(sigmoid);
        let q_hat = self.recon_head.forward(&features);
        Forward {
            features,
            y_hat,
            q_hat,
            cache,
        }
    }

    /// Class probabilities only; skips the reconstruction head.
    pub fn predict_probs(&self, images: &[&[f64]]) -> Array2<f64> {
        let (features, _) = self.encoder.forward(images);
        self.class_head.forward(&features).mapv(sigmoid)
    }

    /// Accumulates gradients given loss derivatives with respect to the
    /// class logits and, optionally, the reconstruction outputs.
    pub fn backward(&self, fwd: &Forward, dlogits: &Array2<f64>, dq_hat: Option<&Array2<f64>>, grad: &mut MtlModel) {
        let mut dfeat = self.class_head.backward(&fwd.features, dlogits, &mut grad.class_head);
        if let Some(dq) = dq_hat {
            dfeat += &self.recon_head.backward(&fwd.features, dq, &mut grad.recon_head);
        }
        self.encoder.backward(&fwd.cache, &dfeat, &mut grad.encoder);
    }

    /// `(y_hat, q_hat)` for one CHW image tensor.
    pub fn predict(&self, image: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let side = self.encoder.side;
        if image.len() != 3 * side * side {
            return Err(Error::invalid(format!(
                "image tensor has {} values, model expects 3x{side}x{side}",
                image.len()
            )));
        }
        let fwd = self.forward(&[image]);
        Ok((fwd.y_hat.row(0).to_vec(), fwd.q_hat.row(0).to_vec()))
    }

    /// Predicts from a stored image; errors name the item.
    pub fn predict_item(&self, images: &ImageStore, item_id: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        self.predict(images.get(item_id)?)
    }

    pub fn to_checkpoint(&self, mut meta: Value) -> Checkpoint {
        meta["model"] = json!({
            "encoder": self.encoder.preset.to_string(),
            "side": self.encoder.side,
            "classes": self.num_classes(),
            "cf_dim": self.cf_dim(),
        });
        Checkpoint::new(meta, to_named(self, ""))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let m = &ck.meta["model"];
        let field = |k: &str| {
            m[k].as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::invalid(format!("checkpoint meta lacks model.{k}")))
        };
        let preset: EncoderPreset = m["encoder"]
            .as_str()
            .ok_or_else(|| Error::invalid("checkpoint meta lacks model.encoder"))?
            .parse()?;
        let mut model = Self::new(&preset, field("side")?, field("classes")?, field("cf_dim")?, 0)?;
        load_named(&mut model, "", &ck.tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path, meta: Value) -> Result<()> {
        self.to_checkpoint(meta).write(path)
    }

    pub fn load(path: &Path) -> Result<(Self, Value)> {
        let ck = Checkpoint::read(path)?;
        Ok((Self::from_checkpoint(&ck)?, ck.meta))
    }
}
