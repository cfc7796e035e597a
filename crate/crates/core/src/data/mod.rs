//! Interaction logs, item catalogs, splits and synthetic data.

pub mod catalog;
pub mod images;
pub mod interactions;
pub mod split;
pub mod stats;
pub mod synthetic;

pub use catalog::{load_catalog, ItemCatalog, ItemRecord};
pub use images::ImageStore;
pub use interactions::{load_interactions, InteractionMatrix};
pub use split::{
    drop_labels, mask_heldout_interactions, split_interactions, split_items, LabelDrop, Role,
    SplitAssignment,
};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticDataset};
