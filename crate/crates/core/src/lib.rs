//! Multiview dimension reduction and prediction.
//!
//! The centerpiece is [`ajive`], the angle-based joint and individual
//! variation decomposition, together with its rank estimation
//! ([`rank`]), PCA baselines ([`pca`]), a planted-structure generator
//! ([`synth`]) and cooperative multiview lasso regression ([`coop`]).

pub mod ajive;
pub mod error;
pub mod matrix;
pub mod coop;
pub mod patches;
pub mod pca;
pub mod rank;
pub mod rng;
pub mod svd;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::FeatureMatrix;
