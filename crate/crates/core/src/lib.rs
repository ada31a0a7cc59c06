//! Kernel (RKHS) toolkit for quantitative finance: pricing-function
//! extrapolation with greeks, reverse stress testing via optimal
//! permutations, generative time-series modeling through invertible noise
//! maps, and conditional-distribution sampling driving portfolio strategies.
//!
//! Data-parallel inner loops (Gram assembly, pricer sweeps, path simulation,
//! permutation-search restarts) run on rayon when the default `parallel`
//! feature is enabled and fall back to sequential iterators otherwise;
//! outputs are identical in both modes.

pub mod encoding;
pub mod error;
pub mod kernel;
pub mod portfolio;
pub mod pricing;
pub mod reverse_stress;
pub mod scale;
pub mod timeseries;
pub mod transport;

pub use error::{Error, Result};
