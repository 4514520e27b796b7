//! Coarse-grained maximum-likelihood state tomography for measurements with
//! ill-calibrated outcomes.
//!
//! The noisy outcome counts are replaced by maximum-weighted-entropy
//! re-estimates before running maximum-likelihood reconstruction on the
//! intended outcomes. The crate also contains the Monte Carlo harness used to
//! compare that estimator with the naive one on random two-qubit states.

pub mod error;
pub mod cli;
pub mod experiment;
pub mod io;
pub mod mle;
pub mod mwe;
pub mod qops;
pub mod randgen;
pub mod sampler;

pub use error::{Error, Result};
