//! Binary logistic regression with an L2 penalty, fitted by L-BFGS.
//!
//! The objective is
//!
//! ```text
//! f(w, b) = Σᵢ [softplus(zᵢ) − yᵢ zᵢ] + (l2 / 2) ‖w‖²,   zᵢ = xᵢ·w + b
//! ```
//!
//! with the intercept left unpenalised.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::SpectraMatrix;

pub const DEFAULT_L2: f64 = 1.0;
pub const DEFAULT_MAX_ITER: usize = 3000;

const MEMORY: usize = 10;
const GRAD_TOL: f64 = 1e-5;
const REL_F_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    pub max_iter: usize,
    pub iterations: usize,
    /// False when `max_iter` was reached first.
    pub converged: bool,
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// Probability of label 1.
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    pub fn predict_row(&self, x: &[f64]) -> u32 {
        u32::from(self.probability(x) > 0.5)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

const ROW_CHUNK: usize = 64;

/// Objective and gradient at `params = [w₀ … w_{n−1}, b]`.
///
/// Rows are processed in fixed chunks whose partial sums are added in chunk
/// order, so the result does not depend on the thread count.
pub fn logistic_loss_and_grad(data: &SpectraMatrix, y: &[f64], l2: f64, params: &[f64]) -> (f64, Vec<f64>) {
    let n = data.n_cols();
    let (w, b) = params.split_at(n);
    let b = b[0];
    let chunk_rows: Vec<usize> = (0..data.n_rows()).step_by(ROW_CHUNK).collect();
    let partials: Vec<(f64, Vec<f64>)> = chunk_rows
        .par_iter()
        .map(|&start| {
            let end = (start + ROW_CHUNK).min(data.n_rows());
            let mut grad = vec![0.0; n + 1];
            let mut loss = 0.0;
            for (i, &yi) in y.iter().enumerate().take(end).skip(start) {
                let x = data.row(i);
                let z = dot(w, x) + b;
                loss += softplus(z) - yi * z;
                let r = sigmoid(z) - yi;
                for (g, xj) in grad[..n].iter_mut().zip(x) {
                    *g += r * xj;
                }
                grad[n] += r;
            }
            (loss, grad)
        })
        .collect();
    let mut grad = vec![0.0; n + 1];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    for (g, wj) in grad[..n].iter_mut().zip(w) {
        *g += l2 * wj;
    }
    loss += 0.5 * l2 * dot(w, w);
    (loss, grad)
}

fn binary_targets(train: &SpectraMatrix) -> Result<Vec<f64>> {
    let labels = train.labels().ok_or(Error::MissingLabels)?;
    if labels.names().len() != 2 {
        return Err(Error::NotBinary(labels.names().len()));
    }
    Ok(labels.ids().iter().map(|&l| f64::from(l)).collect())
}

pub fn fit_logistic(train: &SpectraMatrix, l2: f64, max_iter: usize) -> Result<LogisticModel> {
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::InvalidArgument(format!("l2 strength must be finite and non-negative, got {l2}")));
    }
    let y = binary_targets(train)?;
    if train.is_empty() {
        return Err(Error::Empty("logistic regression training set".into()));
    }
    let n = train.n_cols();
    let m = train.n_rows() as f64;
    let eval = |p: &[f64]| logistic_loss_and_grad(train, &y, l2, p);

    let mut x = vec![0.0; n + 1];
    let (mut f, mut g) = eval(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= GRAD_TOL * m;

    while !converged && iterations < max_iter {
        iterations += 1;
        let mut d = two_loop_direction(&g, &history);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = if history.is_empty() { 1.0 / inf_norm(&g).max(1.0) } else { 1.0 };
        let (x_new, f_new, g_new) = loop {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = eval(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                break (trial, ft, gt);
            }
            step *= 0.5;
            if step < 1e-20 {
                return Err(Error::Numerical("logistic line search failed to decrease the objective".into()));
            }
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * dot(&yv, &yv).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        let rel = (f - f_new) / f.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        converged = inf_norm(&g) <= GRAD_TOL * m || rel <= REL_F_TOL;
    }

    let bias = x.pop().unwrap_or(0.0);
    Ok(LogisticModel { weights: x, bias, l2, max_iter, iterations, converged })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn two_loop_direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}
