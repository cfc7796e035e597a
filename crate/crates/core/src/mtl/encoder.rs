//! Convolutional image encoders.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::ConvCache;
use crate::nn::params::{join, Parameters};
use crate::nn::{Conv2d, FeatureMap};
use crate::rng::Rng;

/// Named encoder architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EncoderPreset {
    /// Three stride-2 3x3 convolutions (16/32/64 channels) and global
    /// average pooling; 64 output features.
    DeskSmall,
    Plugin(String),
}

impl fmt::Display for EncoderPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderPreset::DeskSmall => f.write_str("desk-small"),
            EncoderPreset::Plugin(name) => write!(f, "plugin:{name}"),
        }
    }
}

impl FromStr for EncoderPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("plugin:") {
            _ if s == "desk-small" => Ok(Self::DeskSmall),
            Some(name) if !name.is_empty() => Ok(Self::Plugin(name.to_owned())),
            _ => Err(Error::Config(format!(
                "unknown encoder `{s}` (expected `desk-small` or `plugin:<name>`)"
            ))),
        }
    }
}

impl TryFrom<String> for EncoderPreset {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EncoderPreset> for String {
    fn from(p: EncoderPreset) -> String {
        p.to_string()
    }
}

/// Convolution stack with ReLU after each layer, then global average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEncoder {
    pub preset: EncoderPreset,
    pub convs: Vec<Conv2d>,
    pub side: usize,
}

pub struct EncoderCache {
    layers: Vec<(ConvCache, FeatureMap)>,
    last_height: usize,
    last_width: usize,
}

impl ImageEncoder {
    pub fn new(preset: &EncoderPreset, side: usize, rng: &mut Rng) -> Result<Self> {
        match preset {
            EncoderPreset::DeskSmall => {
                let widths = [3, 16, 32, 64];
                let convs = widths
                    .windows(2)
                    .map(|w| Conv2d::new(w[0], w[1], 3, 2, 1, rng))
                    .collect();
                Ok(Self {
                    preset: preset.clone(),
                    convs,
                    side,
                })
            }
            EncoderPreset::Plugin(name) => Err(Error::Config(format!(
                "encoder plugin `{name}` is not available in this build"
            ))),
        }
    }

    /// Feature size `D`.
    pub fn output_dim(&self) -> usize {
        self.convs.last().map_or(3, Conv2d::out_channels)
    }

    /// Features `[batch, D]` for CHW image tensors.
    pub fn forward(&self, images: &[&[f64]]) -> (Array2<f64>, EncoderCache) {
        let mut x = FeatureMap::from_images(images, 3, self.side, self.side);
        let mut layers = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (mut z, cache) = conv.forward(&x);
            z.data.mapv_inplace(|v| v.max(0.0));
            layers.push((cache, z.clone()));
            x = z;
        }
        let feats = x.global_avg_pool();
        (
            feats,
            EncoderCache {
                layers,
                last_height: x.height,
                last_width: x.width,
            },
        )
    }

    /// Accumulates parameter gradients given `d loss / d features`.
    pub fn backward(&self, cache: &EncoderCache, dfeat: &Array2<f64>, grad: &mut ImageEncoder) {
        let mut dy = FeatureMap::global_avg_pool_backward(dfeat, cache.last_height, cache.last_width);
        for (k, conv) in self.convs.iter().enumerate().rev() {
            let (conv_cache, activated) = &cache.layers[k];
            Zip::from(&mut dy.data)
                .and(&activated.data)
                .for_each(|d, &a| if a <= 0.0 { *d = 0.0 });
            match conv.backward(conv_cache, &dy, &mut grad.convs[k], k > 0) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
    }
}

impl Parameters for ImageEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64])) {
        for (k, conv) in self.convs.iter().enumerate() {
            conv.visit(&join(prefix, &format!("conv{k}")), f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for conv in &mut self.convs {
            conv.visit_mut(f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn preset_parsing() {
        assert_eq!("desk-small".parse::<EncoderPreset>().unwrap(), EncoderPreset::DeskSmall);
        assert_eq!(
            "plugin:resnet18".parse::<EncoderPreset>().unwrap(),
            EncoderPreset::Plugin("resnet18".into())
        );
        assert!("resnet".parse::<EncoderPreset>().is_err());
        assert!("plugin:".parse::<EncoderPreset>().is_err());
        let mut r = rng::stream(0, "t");
        assert!(ImageEncoder::new(&EncoderPreset::Plugin("x".into()), 16, &mut r).is_err());
    }

    #[test]
    fn desk_small_shapes() {
        let enc = ImageEncoder::new(&EncoderPreset::DeskSmall, 16, &mut rng::stream(0, "t")).unwrap();
        assert_eq!(enc.output_dim(), 64);
        let img = vec![0.5; 3 * 16 * 16];
        let (f, cache) = enc.forward(&[&img, &img]);
        assert_eq!(f.dim(), (2, 64));
        assert_eq!((cache.last_height, cache.last_width), (2, 2));
    }
}
