//! Sparse linear regression variable selection via a spike-and-slab EM
//! algorithm, plus a Bayesian-bootstrap ensemble that aggregates selections
//! across weighted, subsampled replicates.
//!
//! Modules:
//!
//! * [`data`] — datasets, standardization, CSV I/O, synthetic designs
//! * [`posterior`] — coefficient posterior moments with low-rank refreshes
//! * [`em`] — the EM iteration returning the MAP inclusion vector
//! * [`bbem`] — the Bayesian-bootstrap ensemble and prediction rule
//! * [`tuning`] — spike-variance grids, BIC and cross-validated tuning
//! * [`experiments`] — scripted benchmark reproductions and summaries

pub mod bbem;
pub mod data;
pub mod em;
pub mod error;
pub mod experiments;
pub mod posterior;
pub mod rng;
pub mod tuning;

pub use error::{Error, Result};
