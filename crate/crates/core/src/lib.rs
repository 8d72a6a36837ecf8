//! Phase-transition thresholds and recovery solvers for corrupted sensing,
//! `y = Phi x* + sqrt(m) v*` with a structured signal `x*` and a sparse
//! corruption `v*`.

pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod geometry;
mod linalg;
mod minimize;
pub mod proxops;
pub mod rng;
pub mod solvers;
pub mod thresholds;

pub use error::{Error, Result};
