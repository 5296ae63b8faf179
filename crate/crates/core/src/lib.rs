//! Qubit noise spectroscopy of stationary, possibly non-Gaussian dephasing
//! noise by repeating short dynamical-decoupling sequences.

pub mod bandwidth;
pub mod classical_noise;
pub mod comb_inversion;
pub mod error;
pub mod experiments;
pub mod filtered;
pub mod quad;
pub mod sequences;
pub mod simulate;
pub mod spectrum;
pub mod spinboson;

pub use error::{Error, Result};
