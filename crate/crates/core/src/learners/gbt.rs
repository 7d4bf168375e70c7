//! Second-order gradient boosting with logistic loss.
//!
//! Each round fits a regression tree to the Newton statistics of the current
//! margin: gradient `g = p - y`, hessian `h = p (1 - p)`. Splits are found by
//! exact greedy enumeration over presorted feature values, level by level, with
//! gain `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)]`. Missing values are
//! tried on both sides and sent to whichever maximizes the gain. Leaves hold
//! `−G/(H+λ)`.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::GbtParams;
use super::tree::{midpoint, Node, Tree};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::log_loss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Training log loss before the first round and after every round.
    #[serde(default)]
    pub train_loss: Vec<f64>,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl GbtModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::SchemaMismatch {
                expected: format!("{} columns", self.n_features),
                found: format!("{} columns", row.len()),
            });
        }
        Ok(sigmoid(self.margin(row)))
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::SchemaMismatch {
                expected: format!("{} columns", self.n_features),
                found: format!("{} columns", x.n_cols()),
            });
        }
        Ok((0..x.n_rows()).into_par_iter().map(|i| sigmoid(self.margin(x.row(i)))).collect())
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    threshold: f64,
    missing_left: bool,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

struct OpenNode {
    node: usize,
    rows: Vec<u32>,
    total: Stats,
}

const NONE: u32 = u32::MAX;

struct Grower<'a> {
    x: &'a Matrix,
    grad: &'a [f64],
    hess: &'a [f64],
    sorted: &'a [Vec<u32>],
    missing: &'a [Vec<u32>],
    lambda: f64,
    min_leaf: usize,
}

impl Grower<'_> {
    fn score(&self, s: Stats) -> Option<f64> {
        let d = s.h + self.lambda;
        (d > 0.0).then(|| s.g * s.g / d)
    }

    fn gain(&self, left: Stats, right: Stats, total: Stats) -> Option<f64> {
        if left.n < self.min_leaf || right.n < self.min_leaf {
            return None;
        }
        Some(0.5 * (self.score(left)? + self.score(right)? - self.score(total)?))
    }

    fn leaf_value(&self, s: Stats) -> f64 {
        let d = s.h + self.lambda;
        if d > 0.0 {
            -s.g / d
        } else {
            0.0
        }
    }

    fn sum(&self, rows: &[u32]) -> Stats {
        let mut s = Stats::default();
        for &r in rows {
            s.g += self.grad[r as usize];
            s.h += self.hess[r as usize];
            s.n += 1;
        }
        s
    }

    /// Best split of every open node on one feature.
    fn scan_feature(&self, f: usize, slot: &[u32], open: &[OpenNode]) -> Vec<Option<Candidate>> {
        let k = open.len();
        let mut miss = vec![Stats::default(); k];
        for &r in &self.missing[f] {
            let s = slot[r as usize];
            if s != NONE {
                let m = &mut miss[s as usize];
                m.g += self.grad[r as usize];
                m.h += self.hess[r as usize];
                m.n += 1;
            }
        }
        let mut run = vec![Stats::default(); k];
        let mut last = vec![f64::NAN; k];
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        for &r in &self.sorted[f] {
            let s = slot[r as usize];
            if s == NONE {
                continue;
            }
            let s = s as usize;
            let v = self.x.get(r as usize, f);
            if run[s].n > 0 && v > last[s] {
                let total = open[s].total;
                let m = miss[s];
                let left = run[s];
                let mut consider = |l: Stats, missing_left: bool| {
                    let rgt = Stats { g: total.g - l.g, h: total.h - l.h, n: total.n - l.n };
                    if let Some(gain) = self.gain(l, rgt, total) {
                        if best[s].is_none_or(|b| gain > b.gain) {
                            best[s] = Some(Candidate { gain, threshold: midpoint(last[s], v), missing_left });
                        }
                    }
                };
                if m.n == 0 {
                    let non_missing_right = total.n - left.n;
                    consider(left, left.n >= non_missing_right);
                } else {
                    consider(left, false);
                    consider(Stats { g: left.g + m.g, h: left.h + m.h, n: left.n + m.n }, true);
                }
            }
            let st = &mut run[s];
            st.g += self.grad[r as usize];
            st.h += self.hess[r as usize];
            st.n += 1;
            last[s] = v;
        }
        best
    }

    fn grow(&self, n_rows: usize, max_depth: usize) -> Tree {
        let all: Vec<u32> = (0..n_rows as u32).collect();
        let total = self.sum(&all);
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut open = vec![OpenNode { node: 0, rows: all, total }];
        let mut slot = vec![NONE; n_rows];
        let n_features = self.x.n_cols();

        for _depth in 0..max_depth {
            if open.is_empty() {
                break;
            }
            slot.iter_mut().for_each(|s| *s = NONE);
            for (i, o) in open.iter().enumerate() {
                for &r in &o.rows {
                    slot[r as usize] = i as u32;
                }
            }
            let per_feature: Vec<Vec<Option<Candidate>>> =
                (0..n_features).into_par_iter().map(|f| self.scan_feature(f, &slot, &open)).collect();

            let mut next = Vec::new();
            for (i, o) in open.into_iter().enumerate() {
                let mut best: Option<(usize, Candidate)> = None;
                for (f, cands) in per_feature.iter().enumerate() {
                    if let Some(c) = cands[i] {
                        if best.is_none_or(|(_, b)| c.gain > b.gain) {
                            best = Some((f, c));
                        }
                    }
                }
                match best {
                    Some((feature, c)) if c.gain > 0.0 => {
                        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = o.rows.iter().partition(|&&r| {
                            let v = self.x.get(r as usize, feature);
                            if v.is_nan() {
                                c.missing_left
                            } else {
                                v < c.threshold
                            }
                        });
                        let left = nodes.len();
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes[o.node] = Node::Split {
                            feature,
                            threshold: c.threshold,
                            missing_left: c.missing_left,
                            left,
                            right: left + 1,
                        };
                        let lt = self.sum(&left_rows);
                        let rt = self.sum(&right_rows);
                        next.push(OpenNode { node: left, rows: left_rows, total: lt });
                        next.push(OpenNode { node: left + 1, rows: right_rows, total: rt });
                    }
                    _ => nodes[o.node] = Node::Leaf { value: self.leaf_value(o.total) },
                }
            }
            open = next;
        }
        for o in open {
            nodes[o.node] = Node::Leaf { value: self.leaf_value(o.total) };
        }
        Tree { nodes }
    }
}

/// Per-feature row orderings: present values sorted ascending (ties by row
/// index) and the rows where the value is missing.
fn presort(x: &Matrix) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    (0..x.n_cols())
        .into_par_iter()
        .map(|f| {
            let (mut present, missing): (Vec<u32>, Vec<u32>) =
                (0..x.n_rows() as u32).partition(|&r| !x.get(r as usize, f).is_nan());
            present.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
            (present, missing)
        })
        .unzip()
}

fn training_loss(margin: &[f64], y: &[u8]) -> f64 {
    let p: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
    log_loss(&p, y).unwrap_or(f64::NAN)
}

/// Fits a boosted ensemble with exactly `params.trees` rounds (none when the
/// labels hold a single class).
pub fn fit_gbt(x: &Matrix, y: &[u8], params: &GbtParams) -> Result<GbtModel> {
    let n = x.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::invalid(format!("boosting needs a non-empty matrix with matching labels ({n} rows, {} labels)", y.len())));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    let prior = (positives as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = params.base_score.unwrap_or_else(|| logit(prior));
    let mut model = GbtModel {
        base_score,
        learning_rate: params.learning_rate,
        l2_lambda: params.l2_lambda,
        n_features: x.n_cols(),
        trees: Vec::with_capacity(params.trees),
        train_loss: Vec::with_capacity(params.trees + 1),
    };
    let mut margin = vec![base_score; n];
    model.train_loss.push(training_loss(&margin, y));
    if positives == 0 || positives == n {
        warn!("boosting on single-class labels; model reduces to the base score");
        return Ok(model);
    }

    let (sorted, missing) = presort(x);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..params.trees {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = p - f64::from(y[i]);
            hess[i] = p * (1.0 - p);
        }
        let grower = Grower {
            x,
            grad: &grad,
            hess: &hess,
            sorted: &sorted,
            missing: &missing,
            lambda: params.l2_lambda,
            min_leaf: params.min_leaf,
        };
        let tree = grower.grow(n, params.max_depth);
        margin.par_iter_mut().enumerate().for_each(|(i, m)| *m += params.learning_rate * tree.predict(x.row(i)));
        model.trees.push(tree);
        model.train_loss.push(training_loss(&margin, y));
    }
    Ok(model)
}
