//! Simulation and numerical verification of multitype self-similar
//! growth-fragmentation processes driven by Markov additive processes.
//!
//! Analytic parts (spectral data, cumulants) are generic over [`Scalar`];
//! Monte Carlo parts work in `f64`.

pub mod cellsystem;
pub mod cumulants;
pub mod error;
pub mod fixtures;
pub mod lamperti;
pub mod linalg;
pub mod map;
pub mod rng;
pub mod roots;
pub mod renewal;
pub mod scalar;
pub mod spine;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double precision MAP parameters.
pub type Spec = map::MapSpec<f64>;
/// Single precision MAP parameters.
pub type Spec32 = map::MapSpec<f32>;
