//! Spectral PDE data generation, Fourier neural operators (FNO, Koopman
//! and inverse-scattering variants), multi-step training, rollout
//! evaluation and inverse scattering tools for KdV.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod ist;
pub mod model;
pub mod solver;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
