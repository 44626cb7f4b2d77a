//! Diffusion models for mixed-type tables trained directly on incomplete data.
//!
//! Missing cells are excluded from the denoising score-matching loss through
//! an observedness mask, so no imputation is needed before training.

pub mod diffusion;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod missingness;
pub mod network;
pub mod numerics;
pub mod tabular;

pub use error::{Error, Result};
