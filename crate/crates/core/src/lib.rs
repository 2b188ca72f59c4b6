//! Shrinkage-optimized directed information between part-based feature
//! sequences.
//!
//! The pipeline runs detections through a pictorial-structure MRF
//! ([`mrf`]), quantizes per-frame Gibbs samples into symbol sequences
//! ([`quantizer`]), and compares sequences with shrinkage-regularized
//! information estimators ([`estimator`]). [`localizer`] builds local DI
//! surfaces with FDR-controlled peaks and [`classifier`] runs symmetrized-DI
//! nearest-neighbor classification.

pub mod classifier;
pub mod config;
pub mod error;
pub mod estimator;
pub mod ingest;
pub mod localizer;
pub mod mrf;
pub mod pipeline;
pub mod quantizer;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
