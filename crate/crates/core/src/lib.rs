//! Deep IMEX minimizing-movement solver for multi-asset Merton basket options.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix the common choices.

pub mod ann;
pub mod config;
pub mod error;
pub mod geometry;
pub mod imex;
pub mod market;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod run;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Single-precision network parameters, the default training precision.
pub type ParamsF32 = ann::NetworkParams<f32>;
pub type ParamsF64 = ann::NetworkParams<f64>;
pub type CheckpointF32 = ann::checkpoint::Checkpoint<f32>;
pub type CheckpointF64 = ann::checkpoint::Checkpoint<f64>;
pub type HeadF32 = ann::SolutionHead<f32>;
pub type HeadF64 = ann::SolutionHead<f64>;
pub type ModelF64 = market::MertonModel<f64>;
