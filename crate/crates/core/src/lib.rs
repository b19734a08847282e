//! Sampling, dynamics and estimate checks for the Gibbs measure of the two-dimensional
//! Zakharov-Yukawa system on the torus.

pub mod dynamics;
pub mod error;
pub mod estimates;
pub mod gibbs;
pub mod grid;
pub mod invariance;
pub mod random_fields;
pub mod rng;
pub mod snapshot;
pub mod spectral;

pub use error::{Result, ZyError};
pub use num_complex::Complex64;
