//! Two-class linear discriminant analysis with a pooled covariance and no
//! shrinkage. The posterior log-odds are
//! `(x - (μ₁ + μ₀)/2)ᵀ Σ⁻¹ (μ₁ - μ₀) + ln(π₁/π₀)`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gbt::sigmoid;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    /// Class means, negatives first.
    pub means: [Vec<f64>; 2],
    pub priors: [f64; 2],
    /// `Σ⁻¹ (μ₁ - μ₀)`.
    pub direction: Vec<f64>,
    pub offset: f64,
    /// Diagonal jitter added to make the covariance invertible, 0 if none.
    pub jitter: f64,
}

impl LdaModel {
    fn log_odds(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.direction.len() {
            return Err(Error::SchemaMismatch {
                expected: format!("{} columns", self.direction.len()),
                found: format!("{} columns", row.len()),
            });
        }
        Ok(row.iter().zip(&self.direction).map(|(x, w)| x * w).sum::<f64>() + self.offset)
    }

    /// `[P(y=0 | x), P(y=1 | x)]`.
    pub fn predict_posteriors(&self, row: &[f64]) -> Result<[f64; 2]> {
        let z = self.log_odds(row)?;
        let p1 = sigmoid(z);
        let p0 = sigmoid(-z);
        let s = p0 + p1;
        Ok([p0 / s, p1 / s])
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        Ok(self.predict_posteriors(row)?[1])
    }
}

/// True when the Cholesky factor exists and its smallest pivot is not
/// negligible against the largest variance.
fn well_conditioned(cov: &DMatrix<f64>) -> bool {
    let max_diag = cov.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
    match cov.clone().cholesky() {
        None => false,
        Some(ch) => {
            let l = ch.l();
            let min_pivot = l.diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
            min_pivot > 1e-10 * max_diag
        }
    }
}

pub fn fit_lda(x: &Matrix, y: &[u8]) -> Result<LdaModel> {
    let n = x.n_rows();
    let d = x.n_cols();
    if y.len() != n {
        return Err(Error::invalid("lda labels do not match rows"));
    }
    if !x.all_finite() {
        return Err(Error::invalid("lda input contains non-finite values"));
    }
    let counts = [y.iter().filter(|&&v| v == 0).count(), y.iter().filter(|&&v| v == 1).count()];
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::invalid(format!(
            "lda needs at least 2 samples per class, got {} negative and {} positive",
            counts[0], counts[1]
        )));
    }
    let mut means = [vec![0.0; d], vec![0.0; d]];
    for (r, &c) in x.rows().zip(y) {
        for (m, v) in means[c as usize].iter_mut().zip(r) {
            *m += v;
        }
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = DVector::<f64>::zeros(d);
    for (r, &c) in x.rows().zip(y) {
        for j in 0..d {
            centered[j] = r[j] - means[c as usize][j];
        }
        cov.syger(1.0, &centered, &centered, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov /= (n - 2) as f64;

    let mut jitter = 0.0;
    if !well_conditioned(&cov) {
        let trace = cov.trace();
        jitter = if trace > 0.0 { 1e-8 * trace / d as f64 } else { 1e-8 };
        warn!("singular pooled covariance; adding diagonal jitter {jitter:e}");
    }
    let mut factor = None;
    let mut added = jitter;
    for _ in 0..12 {
        let mut c = cov.clone();
        for j in 0..d {
            c[(j, j)] += added;
        }
        if let Some(ch) = c.cholesky() {
            factor = Some(ch);
            break;
        }
        added = if added == 0.0 { 1e-8 } else { added * 10.0 };
    }
    let factor = factor.ok_or_else(|| Error::invalid("lda covariance could not be regularized"))?;
    jitter = added;

    let delta = DVector::from_iterator(d, means[1].iter().zip(&means[0]).map(|(a, b)| a - b));
    let w = factor.solve(&delta);
    let priors = [counts[0] as f64 / n as f64, counts[1] as f64 / n as f64];
    let centre: f64 = (0..d).map(|j| w[j] * 0.5 * (means[1][j] + means[0][j])).sum();
    let offset = -centre + (priors[1] / priors[0]).ln();
    let direction: Vec<f64> = w.iter().copied().collect();
    if !direction.iter().all(|v| v.is_finite()) || !offset.is_finite() {
        return Err(Error::invalid("lda produced non-finite coefficients"));
    }
    Ok(LdaModel { means, priors, direction, offset, jitter })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn one_dimensional_closed_form() {
        // Negatives {-2, 0}, positives {0, 2}: means ∓1, pooled variance 2.
        let m = fit_lda(&column(&[-2.0, 0.0, 0.0, 2.0]), &[0, 0, 1, 1]).unwrap();
        assert_eq!(m.jitter, 0.0);
        assert!((m.predict(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
        for x in [-3.0, -0.5, 1.0, 2.5] {
            let expect = 1.0 / (1.0 + (-(x * 2.0 / 2.0f64)).exp());
            assert!((m.predict(&[x]).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn class_with_one_sample_is_rejected() {
        assert!(fit_lda(&column(&[0.0, 1.0, 2.0]), &[0, 0, 1]).is_err());
    }

    #[test]
    fn duplicated_feature_takes_jitter_path() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, i as f64, (i % 3) as f64]).collect();
        let y: Vec<u8> = (0..12).map(|i| u8::from(i >= 6)).collect();
        let m = fit_lda(&Matrix::from_rows(&rows, 3).unwrap(), &y).unwrap();
        assert!(m.jitter > 0.0);
        for r in &rows {
            let p = m.predict_posteriors(r).unwrap();
            assert!(p.iter().all(|v| v.is_finite()));
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unequal_priors_shift_the_boundary() {
        let m = fit_lda(&column(&[-2.0, 0.0, -1.0, 0.0, 2.0]), &[0, 0, 0, 1, 1]).unwrap();
        assert!((m.priors[0] - 0.6).abs() < 1e-15);
        assert!(m.predict(&[0.0]).unwrap() < 0.5);
    }
}
