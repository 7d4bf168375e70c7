//! L1-penalized logistic regression fitted by proximal gradient descent
//! (ISTA) with backtracking. The objective is
//! `mean_i logloss(y_i, σ(w·x_i + b)) + l1_strength · ‖w‖₁`; the intercept is
//! not penalized.

use serde::{Deserialize, Serialize};

use super::gbt::{logit, sigmoid};
use super::spec::LogRegParams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l1_strength: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LogRegModel {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.weights.len() {
            return Err(Error::SchemaMismatch {
                expected: format!("{} columns", self.weights.len()),
                found: format!("{} columns", row.len()),
            });
        }
        Ok(sigmoid(dot(&self.weights, row) + self.intercept))
    }

    pub fn nonzero(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable `log(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss (the smooth part of the objective).
pub fn smooth_loss(weights: &[f64], intercept: f64, x: &Matrix, y: &[u8]) -> f64 {
    let n = x.n_rows() as f64;
    x.rows()
        .zip(y)
        .map(|(r, &yi)| {
            let z = dot(weights, r) + intercept;
            softplus(z) - f64::from(yi) * z
        })
        .sum::<f64>()
        / n
}

/// Gradient of [`smooth_loss`] with respect to weights and intercept.
pub fn smooth_gradient(weights: &[f64], intercept: f64, x: &Matrix, y: &[u8]) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (r, &yi) in x.rows().zip(y) {
        let resid = sigmoid(dot(weights, r) + intercept) - f64::from(yi);
        gb += resid;
        for (g, v) in gw.iter_mut().zip(r) {
            *g += resid * v;
        }
    }
    gw.iter_mut().for_each(|g| *g /= n);
    (gw, gb / n)
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

const TOLERANCE: f64 = 1e-6;

/// Row-compressed copy of the nonzero inputs; one-hot blocks are mostly zero.
struct SparseRows {
    start: Vec<usize>,
    index: Vec<usize>,
    value: Vec<f64>,
}

impl SparseRows {
    fn new(x: &Matrix) -> Self {
        let mut s = SparseRows { start: vec![0], index: Vec::new(), value: Vec::new() };
        for r in x.rows() {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    s.index.push(j);
                    s.value.push(v);
                }
            }
            s.start.push(s.index.len());
        }
        s
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.start[i]..self.start[i + 1];
        self.index[span.clone()].iter().copied().zip(self.value[span].iter().copied())
    }

    fn n_rows(&self) -> usize {
        self.start.len() - 1
    }

    fn loss(&self, w: &[f64], b: f64, y: &[u8]) -> f64 {
        (0..self.n_rows())
            .map(|i| {
                let z = self.row(i).map(|(j, v)| w[j] * v).sum::<f64>() + b;
                softplus(z) - f64::from(y[i]) * z
            })
            .sum::<f64>()
            / self.n_rows() as f64
    }

    fn gradient(&self, w: &[f64], b: f64, y: &[u8]) -> (Vec<f64>, f64) {
        let n = self.n_rows() as f64;
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for i in 0..self.n_rows() {
            let z = self.row(i).map(|(j, v)| w[j] * v).sum::<f64>() + b;
            let resid = sigmoid(z) - f64::from(y[i]);
            gb += resid;
            for (j, v) in self.row(i) {
                gw[j] += resid * v;
            }
        }
        gw.iter_mut().for_each(|g| *g /= n);
        (gw, gb / n)
    }
}

pub fn fit_logreg_l1(x: &Matrix, y: &[u8], params: &LogRegParams) -> Result<LogRegModel> {
    let n = x.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::invalid("logistic regression needs a non-empty matrix with matching labels"));
    }
    if !x.all_finite() {
        return Err(Error::invalid("logistic regression input contains non-finite values"));
    }
    let d = x.n_cols();
    let prior = (y.iter().filter(|&&v| v == 1).count() as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let lambda = params.l1_strength;
    let mut w = vec![0.0; d];
    let mut b = logit(prior);
    let mut step: f64 = 1.0;
    let sparse = SparseRows::new(x);
    let mut f = sparse.loss(&w, b, y);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let (gw, gb) = sparse.gradient(&w, b, y);
        step = (step * 2.0).min(1e6);
        let (w_new, b_new, f_new) = loop {
            let w_new: Vec<f64> =
                w.iter().zip(&gw).map(|(wi, gi)| soft_threshold(wi - step * gi, step * lambda)).collect();
            let b_new = b - step * gb;
            let f_new = sparse.loss(&w_new, b_new, y);
            let mut lin = gb * (b_new - b);
            let mut sq = (b_new - b).powi(2);
            for i in 0..d {
                let delta = w_new[i] - w[i];
                lin += gw[i] * delta;
                sq += delta * delta;
            }
            if f_new <= f + lin + sq / (2.0 * step) || step < 1e-12 {
                break (w_new, b_new, f_new);
            }
            step *= 0.5;
        };
        let change = w_new
            .iter()
            .zip(&w)
            .map(|(a, c)| (a - c).abs())
            .fold((b_new - b).abs(), f64::max);
        w = w_new;
        b = b_new;
        f = f_new;
        if change < TOLERANCE {
            converged = true;
            break;
        }
    }
    if !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
        return Err(Error::invalid("logistic regression diverged"));
    }
    Ok(LogRegModel { weights: w, intercept: b, l1_strength: lambda, iterations, converged })
}
