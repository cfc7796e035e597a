use std::collections::BTreeMap;
use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;

use super::catalog::ItemCatalog;
use crate::error::{Error, Result};

/// Decoded images keyed by item id, as channel-major `[3, side, side]`
/// tensors scaled to `[0, 1]`.
#[derive(Debug, Clone, Default)]
pub struct ImageStore {
    side: usize,
    tensors: BTreeMap<String, Vec<f64>>,
}

pub fn rgb_to_tensor(img: &RgbImage) -> Vec<f64> {
    let (w, h) = img.dimensions();
    let plane = (w * h) as usize;
    let mut out = vec![0.0; 3 * plane];
    for (x, y, px) in img.enumerate_pixels() {
        let k = (y * w + x) as usize;
        for c in 0..3 {
            out[c * plane + k] = px[c] as f64 / 255.0;
        }
    }
    out
}

impl ImageStore {
    pub fn new(side: usize) -> Self {
        Self {
            side,
            tensors: BTreeMap::new(),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn insert(&mut self, item_id: &str, img: &RgbImage) -> Result<()> {
        let (w, h) = img.dimensions();
        if w as usize != self.side || h as usize != self.side {
            return Err(Error::Image {
                item: item_id.to_owned(),
                msg: format!("expected {0}x{0}, got {w}x{h}", self.side),
            });
        }
        self.tensors.insert(item_id.to_owned(), rgb_to_tensor(img));
        Ok(())
    }

    pub fn get(&self, item_id: &str) -> Result<&[f64]> {
        self.tensors
            .get(item_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Image {
                item: item_id.to_owned(),
                msg: "no decoded image".into(),
            })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Decodes the image of every catalog item from its `image_ref`, resizing
    /// to `side` x `side` when needed.
    pub fn load(catalog: &ItemCatalog, side: usize) -> Result<Self> {
        let mut store = Self::new(side);
        for r in catalog.records() {
            let mut img = decode_png(&r.image_ref, &r.item_id)?;
            if img.dimensions() != (side as u32, side as u32) {
                img = image::imageops::resize(&img, side as u32, side as u32, FilterType::Triangle);
            }
            store.insert(&r.item_id, &img)?;
        }
        Ok(store)
    }
}

pub fn decode_png(path: &Path, item_id: &str) -> Result<RgbImage> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|e| Error::Image {
            item: item_id.to_owned(),
            msg: format!("{}: {e}", path.display()),
        })
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            item: path.display().to_string(),
            msg: e.to_string(),
        })
}
