//! Phase two: an image classifier whose shared encoder also regresses the
//! item's CF vector, plus the baselines it is compared against.

pub mod encoder;
pub mod losses;
pub mod model;
pub mod train;
pub mod triplets;

pub use encoder::{EncoderPreset, ImageEncoder};
pub use losses::LossConfig;
pub use model::MtlModel;
pub use train::{
    evaluate_map, score_items, train, train_contrastive, train_image_only, train_mtl_reconstruct,
    train_sequential, EpochLog, MtlHyper, Regime, TrainData, TrainOutcome,
};
pub use triplets::{make_triplets, TripletSampler};
