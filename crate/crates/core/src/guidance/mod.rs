//! How much to trust each CF vector: the CF2Label probe and the per-item
//! confidence weights derived from interactions or probe loss.

pub mod cf2label;
pub mod weights;

pub use cf2label::{train_cf2label, Cf2LabelHyper, Cf2LabelModel};
pub use weights::{weight_interaction, weight_lossbased, weight_uniform, WeightScheme, WeightTable};
