//! Regularised quadratic discriminant analysis.
//!
//! Each class covariance is shrunk towards a scaled identity,
//! `Σ_reg = (1 − λ) Σ̂ + λ (tr Σ̂ / n) I`, with `Σ̂` the unbiased sample
//! covariance. When the dimension exceeds the class size the regularised
//! covariance is `c I + U Uᵀ` with `U` of rank at most `m`, and the quadratic
//! form and log-determinant are evaluated through the Woodbury identity on an
//! `m × m` system instead of an `n × n` factorisation.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::SpectraMatrix;

/// Factorisation used to evaluate `(x − μ)ᵀ Σ_reg⁻¹ (x − μ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceFactor {
    /// Lower Cholesky factor of `Σ_reg`.
    Dense { lower: DMatrix<f64> },
    /// `Σ_reg = shrink·I + basis·basisᵀ`; `inner_lower` is the Cholesky
    /// factor of `shrink·I + basisᵀ·basis`.
    LowRank { shrink: f64, basis: DMatrix<f64>, inner_lower: DMatrix<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QdaClass {
    pub label: u32,
    pub prior: f64,
    pub mean: Vec<f64>,
    pub log_det: f64,
    pub factor: CovarianceFactor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QdaModel {
    pub lambda: f64,
    pub n_features: usize,
    pub classes: Vec<QdaClass>,
}

/// Which factorisation to use. `Auto` picks low-rank when `n ≥ m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum QdaSolver {
    #[default]
    Auto,
    Dense,
    LowRank,
}

pub fn fit_qda(train: &SpectraMatrix, lambda: f64) -> Result<QdaModel> {
    fit_qda_with(train, lambda, QdaSolver::Auto)
}

pub fn fit_qda_with(train: &SpectraMatrix, lambda: f64, solver: QdaSolver) -> Result<QdaModel> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let labels = train.labels().ok_or(Error::MissingLabels)?;
    let counts = labels.counts();
    let present: Vec<u32> = (0..counts.len() as u32).filter(|&c| counts[c as usize] > 0).collect();
    if present.len() < 2 {
        return Err(Error::InvalidArgument(format!("QDA needs at least 2 classes, found {}", present.len())));
    }
    for &c in &present {
        if counts[c as usize] < 2 {
            return Err(Error::ClassTooSmall { class: labels.name_of(c).to_string(), count: counts[c as usize], needed: 2 });
        }
    }
    let total = train.n_rows() as f64;
    let n = train.n_cols();
    let classes = present
        .iter()
        .map(|&c| {
            let rows: Vec<usize> = (0..train.n_rows()).filter(|&r| labels.ids()[r] == c).collect();
            let prior = rows.len() as f64 / total;
            fit_class(train, &rows, c, prior, lambda, solver)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QdaModel { lambda, n_features: n, classes })
}

fn fit_class(train: &SpectraMatrix, rows: &[usize], label: u32, prior: f64, lambda: f64, solver: QdaSolver) -> Result<QdaClass> {
    let n = train.n_cols();
    let m = rows.len();
    let mut mean = vec![0.0; n];
    for &r in rows {
        for (acc, v) in mean.iter_mut().zip(train.row(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);

    // centred data, n × m (one column per sample)
    let centred = DMatrix::from_fn(n, m, |i, j| train.get(rows[j], i) - mean[i]);
    let dof = (m - 1) as f64;
    let trace = centred.iter().map(|v| v * v).sum::<f64>() / dof;
    let shrink = lambda * trace / n as f64;
    let singular = || Error::SingularCovariance { class: label };

    // rank(Σ̂) ≤ m − 1
    if lambda == 0.0 && m - 1 < n {
        return Err(singular());
    }
    let low_rank = match solver {
        QdaSolver::Auto => n >= m && shrink > 0.0,
        QdaSolver::Dense => false,
        QdaSolver::LowRank => true,
    };

    let (factor, log_det) = if low_rank {
        if !(shrink > 0.0) {
            return Err(singular());
        }
        let basis = centred * ((1.0 - lambda) / dof).sqrt();
        let mut inner = basis.tr_mul(&basis);
        for i in 0..m {
            inner[(i, i)] += shrink;
        }
        let chol = Cholesky::new(inner).ok_or_else(singular)?;
        let inner_lower = chol.unpack();
        let log_det = (n - m) as f64 * shrink.ln() + 2.0 * inner_lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        (CovarianceFactor::LowRank { shrink, basis, inner_lower }, log_det)
    } else {
        let mut cov = &centred * centred.transpose() * ((1.0 - lambda) / dof);
        for i in 0..n {
            cov[(i, i)] += shrink;
        }
        let chol = Cholesky::new(cov).ok_or_else(singular)?;
        let lower = chol.unpack();
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        (CovarianceFactor::Dense { lower }, log_det)
    };
    if !log_det.is_finite() {
        return Err(singular());
    }
    Ok(QdaClass { label, prior, mean, log_det, factor })
}

impl QdaClass {
    /// Mahalanobis quadratic forms for each column of `deltas` (n × T).
    fn quadratic_forms(&self, deltas: &DMatrix<f64>) -> Vec<f64> {
        match &self.factor {
            CovarianceFactor::Dense { lower } => {
                let y = lower.solve_lower_triangular(deltas).expect("positive diagonal");
                y.column_iter().map(|c| c.norm_squared()).collect()
            }
            CovarianceFactor::LowRank { shrink, basis, inner_lower } => {
                let projected = basis.tr_mul(deltas);
                let z = inner_lower.solve_lower_triangular(&projected).expect("positive diagonal");
                deltas
                    .column_iter()
                    .zip(z.column_iter())
                    .map(|(d, z)| (d.norm_squared() - z.norm_squared()) / shrink)
                    .collect()
            }
        }
    }
}

impl QdaModel {
    /// Log posterior scores up to a shared constant, one row per sample.
    pub fn decision_scores(&self, data: &SpectraMatrix) -> Result<Vec<Vec<f64>>> {
        if data.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, actual: data.n_cols() });
        }
        let t = data.n_rows();
        let mut scores = vec![Vec::with_capacity(self.classes.len()); t];
        for class in &self.classes {
            let deltas = DMatrix::from_fn(self.n_features, t, |i, j| data.get(j, i) - class.mean[i]);
            let q = class.quadratic_forms(&deltas);
            for (row, qv) in scores.iter_mut().zip(q) {
                row.push(-0.5 * class.log_det - 0.5 * qv + class.prior.ln());
            }
        }
        Ok(scores)
    }

    pub fn predict(&self, data: &SpectraMatrix) -> Result<Vec<u32>> {
        Ok(self
            .decision_scores(data)?
            .iter()
            .map(|s| self.classes[super::tree::argmax_lowest(s) as usize].label)
            .collect())
    }
}

/// `Σ_reg` of a fitted class as a dense matrix.
pub fn regularised_covariance(class: &QdaClass) -> DMatrix<f64> {
    match &class.factor {
        CovarianceFactor::Dense { lower } => lower * lower.transpose(),
        CovarianceFactor::LowRank { shrink, basis, .. } => {
            let mut cov = basis * basis.transpose();
            for i in 0..cov.nrows() {
                cov[(i, i)] += shrink;
            }
            cov
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Labels;
    use crate::synthgen::{sample_gaussian_class, GaussianClassSpec};

    fn two_class(n: usize, per_class: usize, s2: f64, seed: u64) -> SpectraMatrix {
        let a = sample_gaussian_class(&GaussianClassSpec::isotropic(n, 0.0, 1.0), per_class, seed).unwrap();
        let b = sample_gaussian_class(&GaussianClassSpec::isotropic(n, 0.0, s2), per_class, seed + 1).unwrap();
        SpectraMatrix::stack_classes(&[a, b]).unwrap()
    }

    #[test]
    fn separated_blobs_fit_perfectly() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let e = (i as f64 * 0.37).sin() * 0.1;
            rows.push(vec![-5.0 + e, -5.0 - e]);
        }
        for i in 0..20 {
            let e = (i as f64 * 0.53).cos() * 0.1;
            rows.push(vec![5.0 + e, 5.0 + 0.5 * e]);
        }
        let data = SpectraMatrix::from_rows(&rows).unwrap().with_labels(Labels::blocks(&[20, 20])).unwrap();
        let model = fit_qda(&data, 0.4).unwrap();
        assert_eq!(model.predict(&data).unwrap(), data.label_ids().unwrap());
        assert!((model.classes.iter().map(|c| c.prior).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dense_and_low_rank_paths_agree() {
        let data = two_class(12, 8, 1.4, 21);
        let query = two_class(12, 5, 1.2, 99);
        let dense = fit_qda_with(&data, 0.4, QdaSolver::Dense).unwrap();
        let low = fit_qda_with(&data, 0.4, QdaSolver::LowRank).unwrap();
        for (a, b) in dense.classes.iter().zip(&low.classes) {
            assert!((a.log_det - b.log_det).abs() < 1e-9, "{} vs {}", a.log_det, b.log_det);
            let diff = (regularised_covariance(a) - regularised_covariance(b)).abs().max();
            assert!(diff < 1e-12);
        }
        let sd = dense.decision_scores(&query).unwrap();
        let sl = low.decision_scores(&query).unwrap();
        for (x, y) in sd.iter().flatten().zip(sl.iter().flatten()) {
            assert!((x - y).abs() < 1e-8 * x.abs().max(1.0));
        }
    }

    #[test]
    fn lambda_zero_rank_deficient_is_singular() {
        let data = two_class(10, 5, 1.0, 3);
        assert!(matches!(fit_qda(&data, 0.0), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn regularised_covariance_is_shrunk_towards_scaled_identity() {
        let data = two_class(3, 50, 2.0, 8);
        let unreg = fit_qda_with(&data, 0.0, QdaSolver::Dense).unwrap();
        let reg = fit_qda_with(&data, 0.4, QdaSolver::Dense).unwrap();
        let s = regularised_covariance(&unreg.classes[0]);
        let expected = &s * 0.6 + DMatrix::identity(3, 3) * (0.4 * s.trace() / 3.0);
        assert!((regularised_covariance(&reg.classes[0]) - expected).abs().max() < 1e-12);
    }

    #[test]
    fn prediction_is_row_order_invariant() {
        let data = two_class(6, 40, 1.8, 5);
        let model = fit_qda(&data, 0.4).unwrap();
        let query = two_class(6, 10, 1.8, 50);
        let order: Vec<usize> = (0..query.n_rows()).rev().collect();
        let p = model.predict(&query).unwrap();
        let q = model.predict(&query.select_rows(&order)).unwrap();
        let back: Vec<u32> = q.into_iter().rev().collect();
        assert_eq!(p, back);
    }

    #[test]
    fn dimension_mismatch() {
        let model = fit_qda(&two_class(4, 10, 1.5, 1), 0.4).unwrap();
        assert!(matches!(model.predict(&two_class(5, 2, 1.0, 2)), Err(Error::DimensionMismatch { .. })));
    }
}
