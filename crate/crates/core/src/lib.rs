//! Simulation, estimation and diagnostics for order-`p` linear
//! autoregressive systems `x_t = sum_k A_k x_{t-k} + xi_t`.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod rng;
pub mod simulator;
pub mod validation;

pub use error::{Error, Result};
pub use model::{
    ARModel, Dataset, EstimatorConfig, EstimatorKind, InitStrategy, NoiseFamily, NoiseSpec,
    NoiseTensor, RangeMode,
};
