//! Synthetic spectra, classifiers and separability audits for studying how
//! dimensionality alone makes spectral classes separable.
//!
//! * [`synthgen`] draws Gaussian, skew-normal and Lorentzian-spectrum classes.
//! * [`models`] holds QDA, logistic regression, kNN, CART, random forests and
//!   the variance-threshold Bayes rule.
//! * [`evalharness`] splits data, cross-validates and runs experiment grids.
//! * [`audits`] permutes, subsamples and windows real spectra.
//! * [`attribution`] computes TreeSHAP maps.
//! * [`dataio`] reads and writes labelled spectra.

pub mod attribution;
pub mod audits;
pub mod dataio;
pub mod error;
pub mod evalharness;
pub mod models;
pub mod seed;
pub mod special;
pub mod spectra;
pub mod synthgen;

pub use error::{Error, Result};
pub use spectra::{Labels, SpectraMatrix};
