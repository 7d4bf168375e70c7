use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Brute-force k-nearest-neighbor classifier under the Manhattan metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Matrix,
    pub y: Vec<u8>,
    /// Original position of each stored row; distance ties go to the lower rank.
    pub ranks: Vec<usize>,
}

pub fn manhattan(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn fit_knn(x: &Matrix, y: &[u8], k: usize) -> Result<KnnModel> {
    if y.len() != x.n_rows() {
        return Err(Error::invalid("knn labels do not match rows"));
    }
    if k == 0 || k > x.n_rows() {
        return Err(Error::invalid(format!("k = {k} neighbors requested but {} training rows", x.n_rows())));
    }
    Ok(KnnModel { k, x: x.clone(), y: y.to_vec(), ranks: (0..x.n_rows()).collect() })
}

impl KnnModel {
    /// Same model with rows stored in `perm` order (`perm[i]` is the old
    /// position of new row `i`). Predictions are unchanged.
    pub fn reordered(&self, perm: &[usize]) -> KnnModel {
        KnnModel {
            k: self.k,
            x: self.x.select_rows(perm),
            y: perm.iter().map(|&i| self.y[i]).collect(),
            ranks: perm.iter().map(|&i| self.ranks[i]).collect(),
        }
    }

    /// Storage positions of the `k` closest rows, nearest first; distance
    /// ties go to the smaller rank.
    fn nearest(&self, query: &[f64]) -> Result<Vec<usize>> {
        if query.len() != self.x.n_cols() {
            return Err(Error::SchemaMismatch {
                expected: format!("{} columns", self.x.n_cols()),
                found: format!("{} columns", query.len()),
            });
        }
        if self.k > self.x.n_rows() {
            return Err(Error::invalid(format!("k = {} exceeds {} training rows", self.k, self.x.n_rows())));
        }
        let mut d: Vec<(f64, usize, usize)> = self
            .x
            .rows()
            .zip(&self.ranks)
            .enumerate()
            .map(|(pos, (r, &rank))| (manhattan(r, query), rank, pos))
            .collect();
        let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        Ok(d.into_iter().map(|t| t.2).collect())
    }

    /// Ranks (original indices) of the `k` closest training rows.
    pub fn neighbors(&self, query: &[f64]) -> Result<Vec<usize>> {
        Ok(self.nearest(query)?.into_iter().map(|p| self.ranks[p]).collect())
    }

    /// Positive fraction among the neighbors.
    pub fn predict(&self, query: &[f64]) -> Result<f64> {
        let pos = self.nearest(query)?.into_iter().filter(|&p| self.y[p] == 1).count();
        Ok(pos as f64 / self.k as f64)
    }

    pub fn predict_matrix(&self, q: &Matrix) -> Result<Vec<f64>> {
        (0..q.n_rows()).into_par_iter().map(|i| self.predict(q.row(i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn nearest_label_and_fraction() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![5.0, 5.0]], 2).unwrap();
        let y = [1, 1, 0, 0];
        let m1 = fit_knn(&x, &y, 1).unwrap();
        assert_eq!(m1.predict(&[4.0, 4.0]).unwrap(), 0.0);
        assert_eq!(m1.predict(&[0.9, 0.1]).unwrap(), 1.0);
        let m3 = fit_knn(&x, &y, 3).unwrap();
        assert!((m3.predict(&[0.1, 0.1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(fit_knn(&x, &y, 5).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = Matrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0]], 1).unwrap();
        let m = fit_knn(&x, &[0, 1, 1], 1).unwrap();
        assert_eq!(m.neighbors(&[0.0]).unwrap(), vec![0]);
        assert_eq!(m.predict(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn storage_order_does_not_matter() {
        let x = Matrix::from_rows(&[vec![1.0], vec![-1.0], vec![1.0], vec![3.0], vec![-1.0]], 1).unwrap();
        let m = fit_knn(&x, &[0, 1, 1, 0, 0], 2).unwrap();
        let r = m.reordered(&[4, 2, 0, 3, 1]);
        for q in [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0] {
            assert_eq!(m.predict(&[q]).unwrap(), r.predict(&[q]).unwrap());
            assert_eq!(m.neighbors(&[q]).unwrap(), r.neighbors(&[q]).unwrap());
        }
    }

    #[test]
    fn agrees_with_full_sort() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> =
            (0..150).map(|_| (0..3).map(|_| rng.random_range(0..4) as f64).collect()).collect();
        let y: Vec<u8> = (0..150).map(|_| rng.random_range(0..2)).collect();
        let x = Matrix::from_rows(&rows, 3).unwrap();
        let m = fit_knn(&x, &y, 7).unwrap();
        for _ in 0..100 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(0..4) as f64).collect();
            let mut all: Vec<(f64, usize)> = rows.iter().enumerate().map(|(i, r)| (manhattan(r, &q), i)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let expect: Vec<usize> = all[..7].iter().map(|p| p.1).collect();
            assert_eq!(m.neighbors(&q).unwrap(), expect);
        }
    }
}
