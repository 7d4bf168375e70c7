//! Random forests and extremely randomized trees with Gini splits.
//!
//! Each tree draws from its own stream derived from `(seed, tree_index)`, so
//! a forest is identical whatever the thread count. Leaves hold the
//! Laplace-smoothed positive fraction `(pos + 1) / (n + 2)`.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::ForestParams;
use super::tree::{midpoint, Node, Tree};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestVariant {
    /// Bootstrap rows, best threshold per candidate feature.
    RandomForest,
    /// All rows, one uniform random threshold per candidate feature.
    ExtraTrees,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub variant: ForestVariant,
    pub bootstrap: bool,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Mean leaf fraction. Leaf values are summed in sorted order so the
    /// result does not depend on tree order.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch {
                expected: format!("{} columns", self.n_features),
                found: format!("{} columns", row.len()),
            });
        }
        let mut leaves: Vec<f64> = self.trees.iter().map(|t| t.predict(row)).collect();
        leaves.sort_by(f64::total_cmp);
        Ok(leaves.iter().sum::<f64>() / leaves.len() as f64)
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        (0..x.n_rows()).into_par_iter().map(|i| self.predict(x.row(i))).collect()
    }
}

fn laplace(pos: f64, n: f64) -> f64 {
    (pos + 1.0) / (n + 2.0)
}

/// `n * gini` for a node holding `pos` positives among `n`.
fn weighted_gini(pos: f64, n: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        2.0 * pos * (n - pos) / n
    }
}

#[derive(Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    missing_left: bool,
    impurity: f64,
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    variant: ForestVariant,
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn counts(&self, rows: &[usize]) -> (f64, f64) {
        let pos = rows.iter().filter(|&&r| self.y[r] == 1).count();
        (pos as f64, rows.len() as f64)
    }

    /// Child impurity for a split given left-side present counts, the node's
    /// present totals and the missing counts. Tries both missing directions.
    fn evaluate(
        &self,
        left: (f64, f64),
        present: (f64, f64),
        missing: (f64, f64),
    ) -> Option<(f64, bool)> {
        let mut best: Option<(f64, bool)> = None;
        let options: &[bool] = if missing.1 > 0.0 { &[false, true] } else { &[false] };
        for &missing_left in options {
            let (lp, ln) = if missing_left { (left.0 + missing.0, left.1 + missing.1) } else { left };
            let (rp, rn) = (present.0 + missing.0 - lp, present.1 + missing.1 - ln);
            if ln < self.min_leaf as f64 || rn < self.min_leaf as f64 {
                continue;
            }
            let imp = weighted_gini(lp, ln) + weighted_gini(rp, rn);
            if best.is_none_or(|(b, _)| imp < b) {
                let ml = if missing.1 > 0.0 { missing_left } else { ln >= rn };
                best = Some((imp, ml));
            }
        }
        best
    }

    fn best_threshold(&self, rows: &[usize], f: usize) -> Option<Split> {
        let mut present: Vec<(f64, u8)> = Vec::with_capacity(rows.len());
        let mut missing = (0.0, 0.0);
        for &r in rows {
            let v = self.x.get(r, f);
            if v.is_nan() {
                missing.0 += f64::from(self.y[r]);
                missing.1 += 1.0;
            } else {
                present.push((v, self.y[r]));
            }
        }
        if present.len() < 2 {
            return None;
        }
        present.sort_by(|a, b| a.0.total_cmp(&b.0));
        let totals = (present.iter().map(|p| f64::from(p.1)).sum::<f64>(), present.len() as f64);
        let mut best: Option<Split> = None;
        let mut lp = 0.0;
        for i in 0..present.len() - 1 {
            lp += f64::from(present[i].1);
            if present[i].0 == present[i + 1].0 {
                continue;
            }
            if let Some((imp, ml)) = self.evaluate((lp, (i + 1) as f64), totals, missing) {
                if best.is_none_or(|b| imp < b.impurity) {
                    best = Some(Split {
                        feature: f,
                        threshold: midpoint(present[i].0, present[i + 1].0),
                        missing_left: ml,
                        impurity: imp,
                    });
                }
            }
        }
        best
    }

    fn random_threshold(&self, rows: &[usize], f: usize, rng: &mut StreamRng) -> Option<Split> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows {
            let v = self.x.get(r, f);
            if !v.is_nan() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !(lo < hi) {
            return None;
        }
        let mut t = rng.random_range(lo..hi);
        if t <= lo {
            t = midpoint(lo, hi);
        }
        let (mut left, mut present, mut missing) = ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0));
        for &r in rows {
            let v = self.x.get(r, f);
            let y = f64::from(self.y[r]);
            if v.is_nan() {
                missing.0 += y;
                missing.1 += 1.0;
            } else {
                present.0 += y;
                present.1 += 1.0;
                if v < t {
                    left.0 += y;
                    left.1 += 1.0;
                }
            }
        }
        let (imp, ml) = self.evaluate(left, present, missing)?;
        Some(Split { feature: f, threshold: t, missing_left: ml, impurity: imp })
    }

    /// Examines features in random order until `mtry` of them yielded a
    /// candidate split (constant features do not count).
    fn find_split(&self, rows: &[usize], rng: &mut StreamRng) -> Option<Split> {
        let mut order: Vec<usize> = (0..self.x.n_cols()).collect();
        order.shuffle(rng);
        let mut best: Option<Split> = None;
        let mut examined = 0;
        for f in order {
            if examined >= self.mtry {
                break;
            }
            let cand = match self.variant {
                ForestVariant::RandomForest => self.best_threshold(rows, f),
                ForestVariant::ExtraTrees => self.random_threshold(rows, f, rng),
            };
            if let Some(c) = cand {
                examined += 1;
                if best.is_none_or(|b| c.impurity < b.impurity) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut StreamRng) -> usize {
        let id = self.nodes.len();
        let (pos, n) = self.counts(&rows);
        self.nodes.push(Node::Leaf { value: laplace(pos, n) });
        let pure = pos == 0.0 || pos == n;
        if depth >= self.max_depth || pure || rows.len() < 2 * self.min_leaf {
            return id;
        }
        let Some(split) = self.find_split(&rows, rng) else { return id };
        if !(split.impurity < weighted_gini(pos, n)) {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| {
            let v = self.x.get(i, split.feature);
            if v.is_nan() {
                split.missing_left
            } else {
                v < split.threshold
            }
        });
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            missing_left: split.missing_left,
            left,
            right,
        };
        id
    }
}

fn features_per_split(d: usize, fraction: Option<f64>) -> usize {
    let m = match fraction {
        Some(f) => (f * d as f64).round() as usize,
        None => (d as f64).sqrt() as usize,
    };
    m.clamp(1, d.max(1))
}

pub fn fit_forest(
    x: &Matrix,
    y: &[u8],
    params: &ForestParams,
    variant: ForestVariant,
    seed: u64,
) -> Result<ForestModel> {
    let n = x.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::invalid("forest needs a non-empty matrix with matching labels"));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == n {
        warn!("forest on single-class labels; every leaf holds the prior");
    }
    let mtry = features_per_split(x.n_cols(), params.feature_subsample);
    let bootstrap = variant == ForestVariant::RandomForest;
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, &[t as u64]);
            let rows: Vec<usize> =
                if bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            let mut b = TreeBuilder {
                x,
                y,
                variant,
                max_depth: params.max_depth,
                min_leaf: params.min_leaf,
                mtry,
                nodes: Vec::new(),
            };
            b.build(rows, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel { variant, bootstrap, n_features: x.n_cols(), trees })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_points() -> (Matrix, Vec<u8>) {
        // separable by x0 > 0.5 and x1 > 0.5 jointly (AND), not XOR
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]], 2).unwrap();
        (x, vec![0, 0, 0, 1])
    }

    #[test]
    fn depth_zero_is_smoothed_prior() {
        let (x, y) = four_points();
        let params = ForestParams { trees: 1, max_depth: 0, feature_subsample: None, min_leaf: 1 };
        let m = fit_forest(&x, &y, &params, ForestVariant::ExtraTrees, 3).unwrap();
        for i in 0..4 {
            assert_eq!(m.predict(x.row(i)).unwrap(), (1.0 + 1.0) / (4.0 + 2.0));
        }
        let rf = fit_forest(&x, &y, &params, ForestVariant::RandomForest, 3).unwrap();
        let p0 = rf.predict(x.row(0)).unwrap();
        assert!((0..4).all(|i| rf.predict(x.row(i)).unwrap() == p0));
    }

    #[test]
    fn separable_data_fits_exactly() {
        let (x, y) = four_points();
        for variant in [ForestVariant::RandomForest, ForestVariant::ExtraTrees] {
            let params = ForestParams { trees: 200, max_depth: 2, feature_subsample: Some(1.0), min_leaf: 1 };
            let m = fit_forest(&x, &y, &params, variant, 5).unwrap();
            for i in 0..4 {
                let p = m.predict(x.row(i)).unwrap();
                assert_eq!(u8::from(p > 0.5), y[i], "{variant:?} row {i} p={p}");
            }
        }
    }

    #[test]
    fn seeded_determinism_and_order_invariance() {
        let (x, y) = four_points();
        let params = ForestParams { trees: 25, max_depth: 3, feature_subsample: None, min_leaf: 1 };
        let a = fit_forest(&x, &y, &params, ForestVariant::RandomForest, 9).unwrap();
        let b = fit_forest(&x, &y, &params, ForestVariant::RandomForest, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let mut rev = a.clone();
        rev.trees.reverse();
        for i in 0..4 {
            assert_eq!(a.predict(x.row(i)).unwrap(), rev.predict(x.row(i)).unwrap());
        }
    }

    #[test]
    fn single_class_leaves_hold_prior() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], 1).unwrap();
        let params = ForestParams { trees: 3, max_depth: 4, feature_subsample: None, min_leaf: 1 };
        let m = fit_forest(&x, &[1, 1, 1], &params, ForestVariant::ExtraTrees, 1).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        assert!((m.predict(&[0.0]).unwrap() - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn depth_and_range_invariants() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let y: Vec<u8> = rows.iter().map(|r| u8::from(r[0] + 0.3 * r[1] > 0.7)).collect();
        let x = Matrix::from_rows(&rows, 5).unwrap();
        let params = ForestParams { trees: 20, max_depth: 4, feature_subsample: None, min_leaf: 3 };
        for variant in [ForestVariant::RandomForest, ForestVariant::ExtraTrees] {
            let m = fit_forest(&x, &y, &params, variant, 4).unwrap();
            assert!(m.trees.iter().all(|t| t.depth() <= 4 && t.is_well_formed()));
            for p in m.predict_matrix(&x).unwrap() {
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
