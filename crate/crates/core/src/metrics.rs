//! Ranking and probabilistic metrics, calibration and learning curves, and
//! drop-one-feature importance.

use std::io::Write;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Dataset;
use crate::learners::{fit_learner, ClassifierSpec};
use crate::pipeline::{oof_predict, FoldPlan};
use crate::rng::{derive_seed, stream};

const CLIP: f64 = 1e-15;

fn check_lengths(p: &[f64], y: &[u8]) -> Result<()> {
    if p.len() != y.len() {
        return Err(Error::invalid(format!("{} predictions for {} labels", p.len(), y.len())));
    }
    Ok(())
}

fn class_counts(y: &[u8]) -> (usize, usize) {
    let pos = y.iter().filter(|&&v| v == 1).count();
    (pos, y.len() - pos)
}

/// Average 1-based ranks, ties sharing the mean of their positions.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann-Whitney AUC with ties counted one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let (pos, neg) = (pos as f64, neg as f64);
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Mean negative Bernoulli log-likelihood with predictions clipped to
/// `[1e-15, 1 - 1e-15]`.
pub fn log_loss(probabilities: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(probabilities, labels)?;
    if labels.is_empty() {
        return Err(Error::invalid("log loss of an empty sample"));
    }
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(CLIP, 1.0 - CLIP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Rows scoring at least this value are called positive. The first point
    /// uses `+inf`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn area(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fpr", "tpr", "threshold"])?;
        for p in &self.points {
            w.write_record([p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One point per distinct score, thresholds descending, from (0,0) to (1,1).
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64, threshold: s });
    }
    Ok(RocCurve { points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub mean_predicted: Option<f64>,
    pub fraction_positive: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Set when the interval is degenerate-wide (a single sample).
    pub wide: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub bins: Vec<CalibrationBin>,
    pub replicates: usize,
}

impl CalibrationCurve {
    /// Largest `|fraction_positive - mean_predicted|` over non-empty bins.
    pub fn max_deviation(&self) -> f64 {
        self.bins
            .iter()
            .filter_map(|b| Some((b.fraction_positive? - b.mean_predicted?).abs()))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "bin",
            "lower",
            "upper",
            "count",
            "mean_predicted",
            "fraction_positive",
            "ci_low",
            "ci_high",
            "wide",
        ])?;
        for (i, b) in self.bins.iter().enumerate() {
            w.write_record([
                i.to_string(),
                b.lower.to_string(),
                b.upper.to_string(),
                b.count.to_string(),
                opt(b.mean_predicted),
                opt(b.fraction_positive),
                opt(b.ci_low),
                opt(b.ci_high),
                b.wide.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn resample_mean(values: &[f64], rng: &mut impl Rng) -> f64 {
    let n = values.len();
    (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64
}

/// Bootstrap percentile interval for the mean of `values`, clamped to
/// contain the point estimate.
pub(crate) fn bootstrap_mean_ci(values: &[f64], replicates: usize, rng: &mut impl Rng) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut means: Vec<f64> = (0..replicates).map(|_| resample_mean(values, rng)).collect();
    means.sort_by(f64::total_cmp);
    (percentile(&means, 0.025).min(mean), percentile(&means, 0.975).max(mean))
}

/// Equal-width calibration bins over [0, 1] with bootstrap 95% intervals
/// drawn within each bin.
pub fn calibration_curve(
    probabilities: &[f64],
    labels: &[u8],
    n_bins: usize,
    replicates: usize,
    seed: u64,
) -> Result<CalibrationCurve> {
    check_lengths(probabilities, labels)?;
    if n_bins < 2 || replicates < 1 {
        return Err(Error::invalid("calibration needs at least 2 bins and 1 bootstrap replicate"));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, &p) in probabilities.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        members[((p * n_bins as f64) as usize).min(n_bins - 1)].push(i);
    }
    let bins = members
        .par_iter()
        .enumerate()
        .map(|(b, idx)| {
            let lower = b as f64 / n_bins as f64;
            let upper = (b + 1) as f64 / n_bins as f64;
            if idx.is_empty() {
                return CalibrationBin {
                    lower,
                    upper,
                    count: 0,
                    mean_predicted: None,
                    fraction_positive: None,
                    ci_low: None,
                    ci_high: None,
                    wide: false,
                };
            }
            let n = idx.len() as f64;
            let mean_predicted = idx.iter().map(|&i| probabilities[i]).sum::<f64>() / n;
            let ys: Vec<f64> = idx.iter().map(|&i| f64::from(labels[i])).collect();
            let fraction = ys.iter().sum::<f64>() / n;
            let (lo, hi, wide) = if idx.len() == 1 {
                (0.0, 1.0, true)
            } else {
                let mut rng = stream(seed, &[b as u64]);
                let (lo, hi) = bootstrap_mean_ci(&ys, replicates, &mut rng);
                (lo, hi, false)
            };
            CalibrationBin {
                lower,
                upper,
                count: idx.len(),
                mean_predicted: Some(mean_predicted),
                fraction_positive: Some(fraction),
                ci_low: Some(lo),
                ci_high: Some(hi),
                wide,
            }
        })
        .collect();
    Ok(CalibrationCurve { bins, replicates })
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub size: usize,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub replicates: usize,
}

/// Rows of `groups` in group order; used to split by whole groups.
fn group_rows(groups: &[String]) -> Vec<(String, Vec<usize>)> {
    let mut map: std::collections::BTreeMap<&str, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        map.entry(g.as_str()).or_default().push(i);
    }
    map.into_iter().map(|(g, r)| (g.to_string(), r)).collect()
}

/// AUC on a fixed, group-disjoint validation set as a function of training
/// size. Each replicate draws training groups with replacement from the pool
/// until `size` rows are collected.
pub fn learning_curve(
    spec: &ClassifierSpec,
    data: &Dataset,
    sizes: &[usize],
    replicates: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<Vec<LearningPoint>> {
    if replicates == 0 || !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::invalid("learning curve needs replicates >= 1 and validation fraction in (0, 1)"));
    }
    let mut groups = group_rows(&data.groups);
    {
        use rand::seq::SliceRandom;
        groups.shuffle(&mut stream(seed, &[u64::MAX]));
    }
    let target = (validation_fraction * data.len() as f64).ceil() as usize;
    let mut validation = Vec::new();
    let mut split = 0;
    while validation.len() < target && split < groups.len() {
        validation.extend_from_slice(&groups[split].1);
        split += 1;
    }
    let pool = &groups[split..];
    let pool_rows: usize = pool.iter().map(|g| g.1.len()).sum();
    if let Some(&bad) = sizes.iter().find(|&&s| s == 0 || s > pool_rows) {
        return Err(Error::invalid(format!("training size {bad} outside 1..={pool_rows} available rows")));
    }
    validation.sort_unstable();
    let val_labels: Vec<u8> = validation.iter().map(|&i| data.labels[i]).collect();
    let val_rows = data.rows.select_rows(&validation);
    let (vp, vn) = class_counts(&val_labels);
    if vp == 0 || vn == 0 {
        return Err(Error::SingleClass);
    }
    let tasks: Vec<(usize, usize)> = (0..sizes.len()).flat_map(|s| (0..replicates).map(move |b| (s, b))).collect();
    let aucs = tasks
        .par_iter()
        .map(|&(s, b)| {
            let mut rng = stream(seed, &[s as u64, b as u64]);
            let mut train = Vec::with_capacity(sizes[s]);
            while train.len() < sizes[s] {
                let g = pool.choose(&mut rng).expect("non-empty pool");
                train.extend_from_slice(&g.1);
            }
            train.truncate(sizes[s]);
            let fitted = fit_learner(spec, data, &train, derive_seed(seed, &[s as u64, b as u64, 1]))?;
            auc(&fitted.predict_rows(&val_rows)?, &val_labels)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(s, &size)| {
            let (mean_auc, sd_auc) = mean_sd(&aucs[s * replicates..(s + 1) * replicates]);
            LearningPoint { size, mean_auc, sd_auc, replicates }
        })
        .collect())
}

pub fn write_learning_curve_csv<W: Write>(points: &[LearningPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["size", "mean_auc", "sd_auc", "replicates"])?;
    for p in points {
        w.write_record([p.size.to_string(), p.mean_auc.to_string(), p.sd_auc.to_string(), p.replicates.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub auc_with_all: f64,
    pub auc_without: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceReport {
    /// Sorts by delta descending, ties alphabetically by feature name.
    pub fn new(mut entries: Vec<ImportanceEntry>) -> Self {
        entries.sort_by(|a, b| b.delta.total_cmp(&a.delta).then_with(|| a.feature.cmp(&b.feature)));
        Self { entries }
    }

    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.feature == feature).map(|i| i + 1)
    }

    /// Columns: rank, feature, auc_drop.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "feature", "auc_drop"])?;
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([(i + 1).to_string(), e.feature.clone(), e.delta.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pooled out-of-fold AUC of one spec.
pub fn pooled_oof_auc(spec: &ClassifierSpec, data: &Dataset, plan: &FoldPlan, seed: u64) -> Result<f64> {
    let oof = oof_predict(std::slice::from_ref(spec), data, plan, seed)?;
    auc(&oof.column(0), &data.labels)
}

/// Drops each raw feature in turn and measures the fall in pooled OOF AUC
/// under the same fold plan and seeds.
pub fn drop_one_importance(spec: &ClassifierSpec, data: &Dataset, plan: &FoldPlan, seed: u64) -> Result<ImportanceReport> {
    if data.schema.len() < 2 {
        return Err(Error::invalid("importance needs at least two features"));
    }
    let baseline = pooled_oof_auc(spec, data, plan, seed)?;
    let entries = (0..data.schema.len())
        .into_par_iter()
        .map(|j| {
            let without = pooled_oof_auc(spec, &data.without_feature(j), plan, seed)?;
            Ok(ImportanceEntry {
                feature: data.schema.features[j].name.clone(),
                auc_with_all: baseline,
                auc_without: without,
                delta: baseline - without,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceReport::new(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(s: &[f64], y: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1 && y[j] == 0 {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 5], &[0, 1, 0, 1, 1]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn log_loss_examples() {
        assert!((log_loss(&[0.5; 4], &[0, 1, 1, 0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((log_loss(&[0.9, 0.1], &[1, 0]).unwrap() - (-(0.9f64).ln())).abs() < 1e-15);
        assert!(log_loss(&[1.0, 0.0], &[1, 0]).unwrap() < 1e-14);
        assert!(log_loss(&[0.5], &[1, 0]).is_err());
    }

    #[test]
    fn roc_examples() {
        let c = roc_points(&[0.2, 0.9], &[0, 1]).unwrap();
        let xy: Vec<(f64, f64)> = c.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(xy, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let ties = roc_points(&[0.4; 4], &[0, 1, 0, 1]).unwrap();
        assert_eq!(ties.points.len(), 2);
        assert_eq!(ties.area(), 0.5);
    }

    #[test]
    fn calibration_diagonal_and_singletons() {
        // Each bin's predictions equal its positive fraction.
        let mut p = Vec::new();
        let mut y = Vec::new();
        for (prob, pos) in [(0.25, 1), (0.75, 3)] {
            for i in 0..4 {
                p.push(prob);
                y.push(u8::from(i < pos));
            }
        }
        p.push(0.05);
        y.push(0);
        let c = calibration_curve(&p, &y, 10, 200, 1).unwrap();
        assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), p.len());
        assert!(c.bins[2].fraction_positive == Some(0.25) && c.bins[7].fraction_positive == Some(0.75));
        assert!(c.bins[2].mean_predicted == Some(0.25));
        assert_eq!(c.bins[0].ci_low, Some(0.0));
        assert_eq!(c.bins[0].ci_high, Some(1.0));
        assert!(c.bins[0].wide);
        assert_eq!(c.bins[5].count, 0);
        assert_eq!(c.bins[5].fraction_positive, None);
        for b in c.bins.iter().filter(|b| b.count > 0) {
            assert!(b.ci_low.unwrap() <= b.fraction_positive.unwrap());
            assert!(b.fraction_positive.unwrap() <= b.ci_high.unwrap());
        }
    }

    #[test]
    fn probability_one_falls_in_last_bin() {
        let c = calibration_curve(&[1.0, 0.0], &[1, 0], 4, 10, 0).unwrap();
        assert_eq!(c.bins[3].count, 1);
        assert_eq!(c.bins[0].count, 1);
    }

    #[test]
    fn importance_ordering() {
        let e = |f: &str, d: f64| ImportanceEntry { feature: f.into(), auc_with_all: 0.7, auc_without: 0.7 - d, delta: d };
        let r = ImportanceReport::new(vec![e("a", 0.02), e("b", 0.05), e("c", 0.0), e("0", 0.0)]);
        let order: Vec<&str> = r.entries.iter().map(|x| x.feature.as_str()).collect();
        assert_eq!(order, vec!["b", "a", "0", "c"]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("rank,feature,auc_drop\n1,b,0.05\n"));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.125), 1.5);
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(prop_oneof![(0u8..8).prop_map(|v| v as f64 / 8.0), 0.0f64..1.0], n),
                prop::collection::vec(0u8..2, n),
            )
        })
        .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
    }

    fn tie_free() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..60)
            .prop_flat_map(|n| (Just(n), prop::collection::vec(0u8..2, n)))
            .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
            .prop_perturb(|(n, y), mut rng| {
                let mut order: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                (order.into_iter().map(|i| (i as f64 + 0.5) / n as f64).collect(), y)
            })
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise((s, y) in scored()) {
            prop_assert!((auc(&s, &y).unwrap() - brute_auc(&s, &y)).abs() < 1e-12);
        }

        #[test]
        fn roc_area_equals_auc((s, y) in scored()) {
            let c = roc_points(&s, &y).unwrap();
            prop_assert!((c.area() - auc(&s, &y).unwrap()).abs() < 1e-12);
            let last = c.points.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in c.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transform((s, y) in scored()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert!((auc(&s, &y).unwrap() - auc(&t, &y).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn auc_complement((s, y) in tie_free()) {
            let flipped: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
            prop_assert!((auc(&s, &y).unwrap() + auc(&flipped, &y).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn log_loss_non_negative((s, y) in scored()) {
            prop_assert!(log_loss(&s, &y).unwrap() >= 0.0);
        }

        #[test]
        fn calibration_counts_partition((s, y) in scored(), bins in 2usize..12) {
            let c = calibration_curve(&s, &y, bins, 20, 3).unwrap();
            prop_assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), s.len());
            prop_assert_eq!(c.bins[0].lower, 0.0);
            prop_assert_eq!(c.bins[bins - 1].upper, 1.0);
            for w in c.bins.windows(2) {
                prop_assert_eq!(w[0].upper, w[1].lower);
            }
        }
    }
}
