//! Desk-scale synthetic datasets in which interactions, pixels and labels
//! all depend on a hidden per-item class.
//!
//! Each class owns a colour/pattern signature. Items render their class
//! signature with per-item amplitude and colour jitter plus pixel noise.
//! Users prefer one or two classes and sample items from those classes,
//! weighted by item popularity and a latent taste match.

use std::path::PathBuf;

use image::{Rgb, RgbImage};
use rand::seq::index::sample_weighted;
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::catalog::{ItemCatalog, ItemRecord};
use super::images::ImageStore;
use super::interactions::InteractionMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_classes: usize,
    /// Dimension of the latent taste space behind within-class preferences.
    pub factors: usize,
    pub interactions_per_user: usize,
    /// Set from the dataset image size.
    #[serde(skip)]
    pub image_size: usize,
    /// Probability that an item's observed label is swapped for another class.
    pub label_noise: f64,
    /// Standard deviation of additive pixel noise (pixel range is [0, 1]).
    pub image_noise: f64,
    /// Zipf exponent of the class-size distribution; 0 gives balanced classes.
    pub class_skew: f64,
    /// Set from the experiment seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_users: 2000,
            num_items: 600,
            num_classes: 8,
            factors: 8,
            interactions_per_user: 20,
            image_size: 16,
            label_noise: 0.2,
            image_noise: 0.3,
            class_skew: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Long-tail variant used by label-paucity experiments.
    pub fn long_tail() -> Self {
        Self {
            class_skew: 1.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            ("num_users", self.num_users),
            ("num_items", self.num_items),
            ("num_classes", self.num_classes),
            ("factors", self.factors),
            ("interactions_per_user", self.interactions_per_user),
            ("image_size", self.image_size),
        ];
        for (name, v) in counts {
            if v < 2 {
                return Err(Error::invalid(format!("synthetic.{name} must be >= 2, got {v}")));
            }
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::invalid("synthetic.label_noise must be in [0, 0.5)"));
        }
        if self.image_noise < 0.0 || self.class_skew < 0.0 {
            return Err(Error::invalid("synthetic noise and skew must be non-negative"));
        }
        if self.num_items < 2 * self.num_classes {
            return Err(Error::invalid("synthetic.num_items must be >= 2 * num_classes"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub catalog: ItemCatalog,
    pub interactions: InteractionMatrix,
    pub images: ImageStore,
    pub rgb: Vec<(String, RgbImage)>,
    /// Ground-truth class per item, in catalog order.
    pub true_class: Vec<usize>,
    /// Preferred classes per user, in user order.
    pub user_classes: Vec<Vec<usize>>,
}

const PATTERNS: usize = 8;

const PALETTE: [[f64; 3]; 8] = [
    [0.95, 0.15, 0.15],
    [0.15, 0.85, 0.20],
    [0.15, 0.25, 0.95],
    [0.95, 0.85, 0.10],
    [0.85, 0.15, 0.85],
    [0.10, 0.85, 0.85],
    [0.95, 0.55, 0.10],
    [0.55, 0.35, 0.15],
];

/// Binary shape mask of a pattern at pixel (x, y) of a `side` square.
fn pattern_mask(pattern: usize, x: usize, y: usize, side: usize) -> f64 {
    let band = (side / 4).max(1);
    let c = side as f64 / 2.0 - 0.5;
    let (dx, dy) = (x as f64 - c, y as f64 - c);
    let on = match pattern % PATTERNS {
        0 => (y / band) % 2 == 0,
        1 => (x / band) % 2 == 0,
        2 => ((x + y) / band) % 2 == 0,
        3 => ((x + side - y) / band) % 2 == 0,
        4 => ((x / band) + (y / band)) % 2 == 0,
        5 => dx * dx + dy * dy <= (side as f64 / 3.0).powi(2),
        6 => x < band || y < band || x >= side - band || y >= side - band,
        _ => dx.abs() < band as f64 / 2.0 + 0.5 || dy.abs() < band as f64 / 2.0 + 0.5,
    };
    if on {
        1.0
    } else {
        0.0
    }
}

/// Colour of a class; classes beyond the palette reuse colours with a
/// different pattern, so (pattern, colour) stays unique for < 64 classes.
fn class_color(class: usize) -> [f64; 3] {
    PALETTE[(class + class / PATTERNS) % PALETTE.len()]
}

/// Noise-free class signature scaled by `amplitude`, as a CHW tensor.
pub fn class_signature(class: usize, side: usize, amplitude: f64) -> Vec<f64> {
    let plane = side * side;
    let color = class_color(class);
    let mut out = vec![0.5; 3 * plane];
    for y in 0..side {
        for x in 0..side {
            let m = pattern_mask(class, x, y, side);
            for ch in 0..3 {
                out[ch * plane + y * side + x] += amplitude * m * (color[ch] - 0.5);
            }
        }
    }
    out
}

/// Class whose unit-amplitude signature has the highest centred correlation
/// with `tensor`.
pub fn nearest_template(tensor: &[f64], side: usize, num_classes: usize) -> usize {
    let centred = |v: &[f64]| -> Vec<f64> {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x - m).collect()
    };
    let t = centred(tensor);
    let t_norm = t.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    (0..num_classes)
        .map(|c| {
            let s = centred(&class_signature(c, side, 1.0));
            let s_norm = s.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            let dot: f64 = t.iter().zip(&s).map(|(a, b)| a * b).sum();
            (c, dot / (t_norm * s_norm))
        })
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0
}

/// Class sizes by largest remainder on a Zipf prior, at least 2 per class.
fn class_sizes(cfg: &SyntheticConfig) -> Vec<usize> {
    let n = cfg.num_classes;
    let prior: Vec<f64> = (0..n).map(|c| (c as f64 + 1.0).powf(-cfg.class_skew)).collect();
    let z: f64 = prior.iter().sum();
    let spare = cfg.num_items - 2 * n;
    let exact: Vec<f64> = prior.iter().map(|p| p / z * spare as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize + 2).collect();
    let mut rest: Vec<(usize, f64)> = exact.iter().map(|e| e - e.floor()).enumerate().collect();
    rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let missing = cfg.num_items - sizes.iter().sum::<usize>();
    for (c, _) in rest.into_iter().take(missing) {
        sizes[c] += 1;
    }
    sizes
}

fn render(
    class: usize,
    side: usize,
    amplitude: f64,
    jitter: [f64; 3],
    noise: f64,
    rng: &mut Rng,
) -> RgbImage {
    let sig = class_signature(class, side, amplitude);
    let plane = side * side;
    let gauss = Normal::new(0.0, noise.max(1e-12)).expect("valid normal");
    RgbImage::from_fn(side as u32, side as u32, |x, y| {
        let k = y as usize * side + x as usize;
        let mut px = [0u8; 3];
        for ch in 0..3 {
            let e = if noise > 0.0 { gauss.sample(rng) } else { 0.0 };
            let v = sig[ch * plane + k] + jitter[ch] + e;
            px[ch] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        Rgb(px)
    })
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let n_classes = cfg.num_classes;
    let side = cfg.image_size;

    // Item classes: contiguous blocks by size, then shuffled over ids.
    let sizes = class_sizes(cfg);
    let mut classes: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();
    let mut item_rng = rng::stream(cfg.seed, "synthetic/items");
    rand::seq::SliceRandom::shuffle(classes.as_mut_slice(), &mut item_rng);

    let width = cfg.num_items.to_string().len().max(4);
    let item_ids: Vec<String> = (0..cfg.num_items).map(|k| format!("i{k:0width$}")).collect();

    // Latent taste vectors: class centroid plus item-level variation.
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let centroids: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..cfg.factors).map(|_| unit.sample(&mut item_rng)).collect())
        .collect();
    let item_latent: Vec<Vec<f64>> = classes
        .iter()
        .map(|&c| {
            centroids[c]
                .iter()
                .map(|m| m + 0.5 * unit.sample(&mut item_rng))
                .collect()
        })
        .collect();
    let popularity = LogNormal::new(0.0, 0.75).expect("valid lognormal");
    let item_pop: Vec<f64> = (0..cfg.num_items).map(|_| popularity.sample(&mut item_rng)).collect();

    // Images and observed labels.
    let mut pixel_rng = rng::stream(cfg.seed, "synthetic/pixels");
    let mut rgb = Vec::with_capacity(cfg.num_items);
    let mut images = ImageStore::new(side);
    let mut records = Vec::with_capacity(cfg.num_items);
    let mut label_rng = rng::stream(cfg.seed, "synthetic/labels");
    for (k, id) in item_ids.iter().enumerate() {
        let amplitude = pixel_rng.random_range(0.6..1.0);
        let jitter = [
            pixel_rng.random_range(-0.08..0.08),
            pixel_rng.random_range(-0.08..0.08),
            pixel_rng.random_range(-0.08..0.08),
        ];
        let img = render(classes[k], side, amplitude, jitter, cfg.image_noise, &mut pixel_rng);
        images.insert(id, &img)?;
        rgb.push((id.clone(), img));

        let mut observed = classes[k];
        if label_rng.random_bool(cfg.label_noise) {
            let other = label_rng.random_range(0..n_classes - 1);
            observed = if other >= observed { other + 1 } else { other };
        }
        let mut labels = vec![false; n_classes];
        labels[observed] = true;
        records.push(ItemRecord {
            item_id: id.clone(),
            image_ref: PathBuf::from("images").join(format!("{id}.png")),
            labels: Some(labels),
        });
    }
    let class_names = (0..n_classes).map(|c| format!("class{c:02}")).collect();
    let catalog = ItemCatalog::new(records, class_names)?;

    // Users: one or two preferred classes, chosen proportionally to class size.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (k, &c) in classes.iter().enumerate() {
        by_class[c].push(k);
    }
    let class_weight: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let mut user_rng = rng::stream(cfg.seed, "synthetic/users");
    let uwidth = cfg.num_users.to_string().len().max(5);
    let mut pairs = Vec::with_capacity(cfg.num_users * cfg.interactions_per_user);
    let mut user_classes = Vec::with_capacity(cfg.num_users);
    for u in 0..cfg.num_users {
        let k = if user_rng.random_bool(0.5) { 2 } else { 1 };
        let prefs: Vec<usize> = sample_weighted(&mut user_rng, n_classes, |c| class_weight[c], k)
            .expect("positive class weights")
            .into_iter()
            .collect();
        let mix: Vec<f64> = prefs.iter().map(|_| user_rng.random_range(0.3..1.0)).collect();
        let taste: Vec<f64> = (0..cfg.factors).map(|_| unit.sample(&mut user_rng)).collect();
        let uid = format!("u{u:0uwidth$}");
        for _ in 0..cfg.interactions_per_user {
            let c = prefs[weighted_pick(&mix, &mut user_rng)];
            let members = &by_class[c];
            let affinity: Vec<f64> = members
                .iter()
                .map(|&i| {
                    let dot: f64 = taste.iter().zip(&item_latent[i]).map(|(a, b)| a * b).sum();
                    item_pop[i] * (0.3 * dot).exp()
                })
                .collect();
            let item = members[weighted_pick(&affinity, &mut user_rng)];
            pairs.push((uid.clone(), item_ids[item].clone()));
        }
        user_classes.push(prefs);
    }
    let users: Vec<String> = (0..cfg.num_users).map(|u| format!("u{u:0uwidth$}")).collect();
    let interactions = InteractionMatrix::with_ids(users, item_ids.clone(), pairs)?;

    Ok(SyntheticDataset {
        catalog,
        interactions,
        images,
        rgb,
        true_class: classes,
        user_classes,
    })
}

fn weighted_pick(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut t = rng.random_range(0.0..total);
    for (k, w) in weights.iter().enumerate() {
        if t < *w {
            return k;
        }
        t -= w;
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            num_users: 300,
            num_items: 120,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn noiseless_signatures_decode_to_their_class() {
        for side in [8, 16, 24] {
            for c in 0..16 {
                let sig = class_signature(c, side, 0.7);
                assert_eq!(nearest_template(&sig, side, 16), c, "side {side} class {c}");
            }
        }
    }

    #[test]
    fn noiseless_labels_match_image_signature() {
        let cfg = SyntheticConfig {
            label_noise: 0.0,
            image_noise: 0.0,
            ..small()
        };
        let data = generate_synthetic(&cfg).unwrap();
        for r in data.catalog.records() {
            let tensor = data.images.get(&r.item_id).unwrap();
            let label = r.positives().next().unwrap();
            assert_eq!(nearest_template(tensor, cfg.image_size, cfg.num_classes), label);
        }
    }

    #[test]
    fn disjoint_preferences_give_disjoint_items() {
        let data = generate_synthetic(&small()).unwrap();
        let m = &data.interactions;
        for a in 0..40 {
            for b in 0..40 {
                let (pa, pb) = (&data.user_classes[a], &data.user_classes[b]);
                if pa.iter().any(|c| pb.contains(c)) {
                    continue;
                }
                for i in m.user_row(a) {
                    assert!(!m.contains(b, *i));
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.catalog, b.catalog);
        assert_eq!(a.interactions, b.interactions);
        assert_eq!(a.rgb, b.rgb);
    }

    #[test]
    fn long_tail_class_sizes() {
        let sizes = class_sizes(&SyntheticConfig::long_tail());
        assert_eq!(sizes.iter().sum::<usize>(), 600);
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        assert!(sizes.iter().all(|&s| s >= 2));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SyntheticConfig {
            label_noise: 0.5,
            ..small()
        };
        assert!(generate_synthetic(&cfg).is_err());
        let cfg = SyntheticConfig {
            num_classes: 1,
            ..small()
        };
        assert!(generate_synthetic(&cfg).is_err());
    }
}
