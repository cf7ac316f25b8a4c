//! Ordinal boosting autoencoder (OBA) for gridded precipitation bias
//! correction: a denoising convolutional autoencoder learns a latent
//! representation of NWP fields, a bank of per-threshold ordinal subnets
//! turns regression into boosting over rank classifiers, and a rain/dry
//! selector gates the final estimate.

pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod ordinal;
pub mod pipeline;
pub mod reference;
pub mod synthgen;
pub mod tensor;

pub use error::{ObaError, Result};
pub use tensor::Tensor;
