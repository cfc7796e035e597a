//! Minimal dense/convolutional building blocks with hand-written gradients.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod linear;
pub mod optim;
pub mod params;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use conv::{Conv2d, FeatureMap};
pub use linear::Linear;
pub use optim::{Adam, Sgd};
pub use params::Parameters;
