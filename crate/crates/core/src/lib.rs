//! Collaborative-filtering guided image categorization.
//!
//! Phase one learns latent item vectors from user-item interactions
//! ([`cf`]); phase two trains an image classifier whose shared encoder also
//! reconstructs those vectors ([`mtl`]), weighted per item by [`guidance`].
//! [`eval`] measures everything and [`pipeline`] wires the stages to files.

pub mod cf;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod guidance;
pub mod mtl;
pub mod nn;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
