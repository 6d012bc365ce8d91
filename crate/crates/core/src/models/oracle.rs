//! Bayes-optimal rule for two equal-mean isotropic Gaussians that differ only
//! in variance, and its closed-form accuracy.
//!
//! With `S = Σⱼ (xⱼ − μ)²` the log-likelihood ratio is linear in `S`, so the
//! Bayes rule (equal priors) predicts the wider class iff `S > T` with
//!
//! ```text
//! T = n ln(σ₂² / σ₁²) / (1/σ₁² − 1/σ₂²),   σ₁ < σ₂.
//! ```
//!
//! `S/σ²` is chi-square with `n` degrees of freedom under each class, which
//! gives the exact accuracy `½ [F_n(T/σ₁²) + 1 − F_n(T/σ₂²)]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::chi_square_cdf;
use crate::spectra::SpectraMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleThresholdModel {
    pub n: usize,
    pub mu: f64,
    /// Smaller standard deviation after canonicalisation.
    pub sigma1: f64,
    pub sigma2: f64,
    pub threshold: f64,
    /// Label of the `sigma1` class.
    pub narrow_label: u32,
    /// Label of the `sigma2` class.
    pub wide_label: u32,
}

fn canonical_threshold(n: usize, lo: f64, hi: f64) -> f64 {
    let (v1, v2) = (lo * lo, hi * hi);
    n as f64 * (v2 / v1).ln() / (1.0 / v1 - 1.0 / v2)
}

/// Oracle for class 0 ~ `N(μ, σ_a² I)` and class 1 ~ `N(μ, σ_b² I)`.
pub fn oracle_threshold(n: usize, mu: f64, sigma_a: f64, sigma_b: f64) -> Result<OracleThresholdModel> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if !(sigma_a > 0.0 && sigma_b > 0.0) {
        return Err(Error::InvalidArgument("standard deviations must be positive".into()));
    }
    if sigma_a == sigma_b {
        return Err(Error::DegenerateRule(format!(
            "sigma1 = sigma2 = {sigma_a}: the classes are indistinguishable"
        )));
    }
    let (sigma1, sigma2, narrow_label, wide_label) =
        if sigma_a < sigma_b { (sigma_a, sigma_b, 0, 1) } else { (sigma_b, sigma_a, 1, 0) };
    Ok(OracleThresholdModel { n, mu, sigma1, sigma2, threshold: canonical_threshold(n, sigma1, sigma2), narrow_label, wide_label })
}

impl OracleThresholdModel {
    /// `S = Σⱼ (xⱼ − μ)²`
    pub fn statistic(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| (v - self.mu) * (v - self.mu)).sum()
    }

    pub fn predict_row(&self, x: &[f64]) -> u32 {
        if self.statistic(x) > self.threshold {
            self.wide_label
        } else {
            self.narrow_label
        }
    }

    pub fn predict(&self, data: &SpectraMatrix) -> Result<Vec<u32>> {
        if data.n_rows() > 0 && data.n_cols() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: data.n_cols() });
        }
        Ok(data.rows().map(|r| self.predict_row(r)).collect())
    }
}

/// Exact balanced accuracy of the oracle rule; `0.5` when `σ₁ = σ₂`.
pub fn oracle_accuracy_analytic(n: usize, sigma_a: f64, sigma_b: f64) -> f64 {
    if sigma_a == sigma_b {
        return 0.5;
    }
    let (lo, hi) = if sigma_a < sigma_b { (sigma_a, sigma_b) } else { (sigma_b, sigma_a) };
    let t = canonical_threshold(n, lo, hi);
    let dof = n as f64;
    0.5 * (chi_square_cdf(t / (lo * lo), dof) + 1.0 - chi_square_cdf(t / (hi * hi), dof))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_threshold() {
        // φ(x;0,1) = φ(x;0,4)  ⇔  x² = ln 4 / (1 − 1/4)
        let m = oracle_threshold(1, 0.0, 1.0, 2.0).unwrap();
        assert!((m.threshold - 4f64.ln() / 0.75).abs() < 1e-15);
        assert!((m.threshold - 1.848_392_481_493_408).abs() < 1e-12);
        assert!(m.threshold > 0.0);
    }

    #[test]
    fn equal_sigmas_are_degenerate() {
        assert!(matches!(oracle_threshold(100, 0.0, 1.0, 1.0), Err(Error::DegenerateRule(_))));
        assert_eq!(oracle_accuracy_analytic(100, 1.3, 1.3), 0.5);
    }

    #[test]
    fn threshold_linear_in_dimension() {
        let a = oracle_threshold(37, 1.0, 1.0, 1.3).unwrap().threshold;
        let b = oracle_threshold(74, 1.0, 1.0, 1.3).unwrap().threshold;
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn canonicalisation_swaps_labels() {
        let m = oracle_threshold(3, 0.0, 2.0, 1.0).unwrap();
        assert_eq!((m.sigma1, m.sigma2, m.narrow_label, m.wide_label), (1.0, 2.0, 1, 0));
        assert_eq!(m.predict_row(&[10.0, 0.0, 0.0]), 0);
        assert_eq!(m.predict_row(&[0.1, 0.0, 0.0]), 1);
    }
}
