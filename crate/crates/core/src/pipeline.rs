//! Grouped cross-validation, out-of-fold prediction, stacking and grid
//! selection.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureSchema};
use crate::learners::{fit_learner, fit_model, ClassifierSpec, FittedLearner, LearnerKind, Model};
use crate::matrix::Matrix;
use crate::metrics::{auc, log_loss, mean_sd};
use crate::rng::{derive_seed, stream};

pub const FORMAT_VERSION: u32 = 1;

/// Assignment of every group key to one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, group: &str) -> Option<usize> {
        self.assignment.get(group).copied()
    }

    /// Fold index of each row.
    pub fn row_folds(&self, groups: &[String]) -> Result<Vec<usize>> {
        groups
            .iter()
            .map(|g| self.fold_of(g).ok_or_else(|| Error::invalid(format!("group `{g}` missing from fold plan"))))
            .collect()
    }

    /// Number of groups in each fold.
    pub fn group_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &f in self.assignment.values() {
            c[f] += 1;
        }
        c
    }
}

/// Shuffles the sorted distinct groups with the seed and deals them to folds
/// round-robin.
pub fn grouped_kfold(groups: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let distinct: BTreeSet<&str> = groups.iter().map(String::as_str).collect();
    if distinct.len() < k {
        return Err(Error::invalid(format!("{} distinct groups cannot fill {k} folds", distinct.len())));
    }
    let mut order: Vec<&str> = distinct.into_iter().collect();
    order.shuffle(&mut stream(seed, &[k as u64]));
    let assignment = order.into_iter().enumerate().map(|(i, g)| (g.to_string(), i % k)).collect();
    Ok(FoldPlan { k, seed, assignment })
}

/// Out-of-fold probabilities, one column per spec, with the fold of the
/// model that produced each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OofMatrix {
    pub specs: Vec<String>,
    pub values: Matrix,
    /// Row-major, same shape as `values`.
    pub provenance: Vec<usize>,
    pub warnings: Vec<String>,
}

impl OofMatrix {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j)
    }

    pub fn provenance(&self, i: usize, j: usize) -> usize {
        self.provenance[i * self.values.n_cols() + j]
    }
}

fn fold_rows(row_folds: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..row_folds.len()).partition(|&i| row_folds[i] == f);
            (train, test)
        })
        .collect()
}

/// Fits every spec on each fold's complement and predicts the fold. Each
/// (fold, spec) unit uses a seed derived from `(seed, fold)` and writes only
/// its own cells.
pub fn oof_predict(specs: &[ClassifierSpec], data: &Dataset, plan: &FoldPlan, seed: u64) -> Result<OofMatrix> {
    if specs.is_empty() {
        return Err(Error::invalid("no first-layer specs"));
    }
    let row_folds = plan.row_folds(&data.groups)?;
    let folds = fold_rows(&row_folds, plan.k);
    let m = specs.len();
    let tasks: Vec<(usize, usize)> = (0..plan.k).flat_map(|f| (0..m).map(move |j| (f, j))).collect();
    let results = tasks
        .par_iter()
        .map(|&(f, j)| {
            let (train, test) = &folds[f];
            if train.is_empty() {
                return Err(Error::invalid(format!("fold {f} leaves no training rows")));
            }
            let fitted = fit_learner(&specs[j], data, train, derive_seed(seed, &[f as u64]))?;
            let p = fitted.predict_rows(&data.rows.select_rows(test))?;
            let warnings = fitted.warnings.into_iter().map(|w| format!("fold {f}: {w}")).collect::<Vec<_>>();
            Ok((f, j, p, warnings))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = data.len();
    let mut values = Matrix::zeros(n, m);
    let mut provenance = vec![usize::MAX; n * m];
    let mut warnings = Vec::new();
    for (f, j, p, w) in results {
        for (&i, v) in folds[f].1.iter().zip(p) {
            values.row_mut(i)[j] = v;
            provenance[i * m + j] = f;
        }
        warnings.extend(w);
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(OofMatrix { specs: specs.iter().map(ClassifierSpec::label).collect(), values, provenance, warnings })
}

/// Fails unless every group sits in one fold and every OOF cell came from the
/// model that held out its row's fold.
pub fn verify_provenance(oof: &OofMatrix, plan: &FoldPlan, groups: &[String]) -> Result<()> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups {
        let f = plan.fold_of(g).ok_or_else(|| Error::Leakage(format!("group `{g}` has no fold")))?;
        if *seen.entry(g.as_str()).or_insert(f) != f {
            return Err(Error::Leakage(format!("group `{g}` appears in two folds")));
        }
    }
    let m = oof.values.n_cols();
    for (i, g) in groups.iter().enumerate() {
        let f = seen[g.as_str()];
        for j in 0..m {
            if oof.provenance(i, j) != f {
                return Err(Error::Leakage(format!(
                    "row {i} (group `{g}`, fold {f}) predicted by fold model {}",
                    oof.provenance(i, j)
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetric {
    pub fold: usize,
    pub spec: String,
    pub logloss: f64,
    /// `None` when the fold holds a single class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub spec: String,
    pub logloss_mean: f64,
    /// Sample standard deviation over folds.
    pub logloss_sd: f64,
    /// AUC over the concatenated out-of-fold predictions.
    pub pooled_auc: f64,
    /// Mean of the per-fold AUCs that are defined.
    pub mean_fold_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: usize,
    pub per_fold: Vec<FoldMetric>,
    pub summary: Vec<SpecSummary>,
}

impl CvResult {
    /// Columns: fold, spec, logloss, auc.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "spec", "logloss", "auc"])?;
        for r in &self.per_fold {
            w.write_record([
                r.fold.to_string(),
                r.spec.clone(),
                r.logloss.to_string(),
                r.auc.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_for(&self, spec: &str) -> Option<&SpecSummary> {
        self.summary.iter().find(|s| s.spec == spec)
    }
}

/// Per-fold and pooled metrics for named prediction columns.
pub fn cv_metrics(columns: &[(String, Vec<f64>)], labels: &[u8], plan: &FoldPlan, groups: &[String]) -> Result<CvResult> {
    let row_folds = plan.row_folds(groups)?;
    let folds = fold_rows(&row_folds, plan.k);
    let mut per_fold = Vec::new();
    let mut summary = Vec::new();
    for (name, p) in columns {
        let mut losses = Vec::with_capacity(plan.k);
        let mut aucs = Vec::new();
        for (f, (_, test)) in folds.iter().enumerate() {
            let fp: Vec<f64> = test.iter().map(|&i| p[i]).collect();
            let fy: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
            let ll = log_loss(&fp, &fy)?;
            let a = auc(&fp, &fy).ok();
            losses.push(ll);
            aucs.extend(a);
            per_fold.push(FoldMetric { fold: f, spec: name.clone(), logloss: ll, auc: a });
        }
        let (logloss_mean, logloss_sd) = mean_sd(&losses);
        summary.push(SpecSummary {
            spec: name.clone(),
            logloss_mean,
            logloss_sd,
            pooled_auc: auc(p, labels)?,
            mean_fold_auc: (!aucs.is_empty()).then(|| mean_sd(&aucs).0),
        });
    }
    Ok(CvResult { folds: plan.k, per_fold, summary })
}

/// Six full-data first-layer models and a meta learner over their
/// probabilities, plus the schema needed to encode new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub format_version: u32,
    pub schema: FeatureSchema,
    pub schema_hash: String,
    pub specs: Vec<ClassifierSpec>,
    pub meta_spec: ClassifierSpec,
    pub first_layer: Vec<FittedLearner>,
    pub meta: Model,
    pub folds: usize,
    pub seed: u64,
    pub metadata: BTreeMap<String, String>,
}

fn default_metadata() -> BTreeMap<String, String> {
    [
        ("first_layer", "full-data refits"),
        ("meta_inputs", "out-of-fold probability columns only"),
        ("tree_categoricals", "threshold splits on ordinal codes"),
        ("tree_missing", "learned missing direction per split"),
        ("onehot_numerics", "standardized on training rows, median-imputed"),
        ("gbt_unreported_defaults", "learning_rate=0.1, l2_lambda=1"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

impl StackedModel {
    pub fn n_inputs(&self) -> usize {
        self.first_layer.len()
    }

    /// First-layer probabilities for raw schema rows.
    pub fn first_layer_matrix(&self, rows: &Matrix) -> Result<Matrix> {
        if rows.n_cols() != self.schema.len() {
            return Err(Error::SchemaMismatch {
                expected: format!("{} features", self.schema.len()),
                found: format!("{} features", rows.n_cols()),
            });
        }
        let cols = self.first_layer.iter().map(|l| l.predict_rows(rows)).collect::<Result<Vec<_>>>()?;
        let m = cols.len();
        let mut out = Matrix::zeros(rows.n_rows(), m);
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                out.row_mut(i)[j] = *v;
            }
        }
        Ok(out)
    }

    /// Predicts raw rows encoded under the stored schema.
    pub fn predict_rows(&self, rows: &Matrix) -> Result<Vec<f64>> {
        self.meta.predict_matrix(&self.first_layer_matrix(rows)?)
    }

    /// Predicts rows encoded under a schema with the given hash.
    pub fn predict_checked(&self, schema_hash: &str, rows: &Matrix) -> Result<Vec<f64>> {
        if schema_hash != self.schema_hash {
            return Err(Error::SchemaMismatch { expected: self.schema_hash.clone(), found: schema_hash.to_string() });
        }
        self.predict_rows(rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and checks format version and schema hash.
    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let version = v.get("format_version").and_then(serde_json::Value::as_u64).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::FormatVersion(version));
        }
        let model: StackedModel = serde_json::from_value(v)?;
        let hash = model.schema.hash();
        if hash != model.schema_hash {
            return Err(Error::SchemaMismatch { expected: model.schema_hash, found: hash });
        }
        if model.first_layer.len() != model.specs.len() {
            return Err(Error::invalid("stacked model has inconsistent first-layer count"));
        }
        Ok(model)
    }
}

/// Everything produced by one cross-validated stacking run.
#[derive(Debug, Clone)]
pub struct StackRun {
    pub model: StackedModel,
    pub oof: OofMatrix,
    /// Meta predictions cross-fitted over the OOF matrix with the same plan.
    pub ensemble_oof: Vec<f64>,
    pub cv: CvResult,
}

pub const ENSEMBLE: &str = "ensemble";

fn check_stack_inputs(data: &Dataset, meta_spec: &ClassifierSpec) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let pos = data.n_positive();
    if pos == 0 || pos == data.len() {
        return Err(Error::SingleClass);
    }
    if meta_spec.kind != LearnerKind::Gbt {
        return Err(Error::InvalidSpec(format!("meta learner must be gbt, got {}", meta_spec.kind)));
    }
    meta_spec.validate()
}

fn fit_deployment(
    data: &Dataset,
    specs: &[ClassifierSpec],
    meta_spec: &ClassifierSpec,
    oof: &OofMatrix,
    plan: &FoldPlan,
    seed: u64,
) -> Result<StackedModel> {
    let all: Vec<usize> = (0..data.len()).collect();
    let full_seed = derive_seed(seed, &[u64::MAX]);
    let first_layer = specs
        .par_iter()
        .map(|s| fit_learner(s, data, &all, full_seed))
        .collect::<Result<Vec<_>>>()?;
    let meta = fit_model(meta_spec, &oof.values, &data.labels, derive_seed(seed, &[u64::MAX - 1]))?;
    Ok(StackedModel {
        format_version: FORMAT_VERSION,
        schema: data.schema.clone(),
        schema_hash: data.schema.hash(),
        specs: specs.to_vec(),
        meta_spec: meta_spec.clone(),
        first_layer,
        meta,
        folds: plan.k,
        seed,
        metadata: default_metadata(),
    })
}

/// Out-of-fold first layer, meta learner on the OOF columns, and full-data
/// first-layer refits for deployment.
pub fn fit_stack(
    data: &Dataset,
    specs: &[ClassifierSpec],
    meta_spec: &ClassifierSpec,
    plan: &FoldPlan,
    seed: u64,
) -> Result<StackedModel> {
    check_stack_inputs(data, meta_spec)?;
    let oof = oof_predict(specs, data, plan, seed)?;
    verify_provenance(&oof, plan, &data.groups)?;
    fit_deployment(data, specs, meta_spec, &oof, plan, seed)
}

/// Meta learner cross-fitted over the OOF matrix with the same folds.
pub fn ensemble_oof(
    oof: &OofMatrix,
    labels: &[u8],
    groups: &[String],
    meta_spec: &ClassifierSpec,
    plan: &FoldPlan,
    seed: u64,
) -> Result<Vec<f64>> {
    let row_folds = plan.row_folds(groups)?;
    let folds = fold_rows(&row_folds, plan.k);
    let parts = folds
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let y: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
            let pos = y.iter().filter(|&&v| v == 1).count();
            let model = if pos == 0 || pos == y.len() {
                Model::Constant { probability: pos as f64 / y.len().max(1) as f64 }
            } else {
                fit_model(meta_spec, &oof.values.select_rows(train), &y, derive_seed(seed, &[f as u64, 1]))?
            };
            model.predict_matrix(&oof.values.select_rows(test))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; labels.len()];
    for ((_, test), p) in folds.iter().zip(parts) {
        for (&i, v) in test.iter().zip(p) {
            out[i] = v;
        }
    }
    Ok(out)
}

/// [`fit_stack`] plus cross-fitted ensemble predictions and CV metrics for
/// every first-layer spec and the ensemble.
pub fn run_stack(
    data: &Dataset,
    specs: &[ClassifierSpec],
    meta_spec: &ClassifierSpec,
    plan: &FoldPlan,
    seed: u64,
) -> Result<StackRun> {
    check_stack_inputs(data, meta_spec)?;
    let oof = oof_predict(specs, data, plan, seed)?;
    verify_provenance(&oof, plan, &data.groups)?;
    let ensemble = ensemble_oof(&oof, &data.labels, &data.groups, meta_spec, plan, seed)?;
    let mut columns: Vec<(String, Vec<f64>)> =
        oof.specs.iter().enumerate().map(|(j, s)| (s.clone(), oof.column(j))).collect();
    columns.push((ENSEMBLE.to_string(), ensemble.clone()));
    let cv = cv_metrics(&columns, &data.labels, plan, &data.groups)?;
    let model = fit_deployment(data, specs, meta_spec, &oof, plan, seed)?;
    Ok(StackRun { model, oof, ensemble_oof: ensemble, cv })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub spec: ClassifierSpec,
    pub mean_logloss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub kind: LearnerKind,
    pub best: ClassifierSpec,
    pub scores: Vec<GridScore>,
}

/// Grid point with the lowest mean fold log loss per learner kind. Exact
/// ties go to fewer trees, then stronger regularization, then the
/// lexicographically smaller label.
pub fn select_hyperparams(
    grid: &[ClassifierSpec],
    data: &Dataset,
    plan: &FoldPlan,
    seed: u64,
) -> Result<Vec<Selection>> {
    let oof = oof_predict(grid, data, plan, seed)?;
    let row_folds = plan.row_folds(&data.groups)?;
    let folds = fold_rows(&row_folds, plan.k);
    let mut scores = Vec::with_capacity(grid.len());
    for (j, spec) in grid.iter().enumerate() {
        let col = oof.column(j);
        let mut losses = Vec::with_capacity(plan.k);
        for (_, test) in &folds {
            let p: Vec<f64> = test.iter().map(|&i| col[i]).collect();
            let y: Vec<u8> = test.iter().map(|&i| data.labels[i]).collect();
            losses.push(log_loss(&p, &y)?);
        }
        scores.push(GridScore { spec: spec.clone(), mean_logloss: mean_sd(&losses).0 });
    }
    let mut out = Vec::new();
    for kind in LearnerKind::ALL {
        let mut of_kind: Vec<GridScore> = scores.iter().filter(|s| s.spec.kind == kind).cloned().collect();
        if of_kind.is_empty() {
            continue;
        }
        of_kind.sort_by(|a, b| {
            a.mean_logloss
                .total_cmp(&b.mean_logloss)
                .then(a.spec.tree_count().cmp(&b.spec.tree_count()))
                .then(b.spec.regularization().total_cmp(&a.spec.regularization()))
                .then_with(|| a.spec.label().cmp(&b.spec.label()))
        });
        out.push(Selection { kind, best: of_kind[0].spec.clone(), scores: of_kind });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureDef;

    fn groups(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn toy(n_groups: usize) -> Dataset {
        let schema = FeatureSchema::new(vec![FeatureDef::numeric("x"), FeatureDef::numeric("z")]).unwrap();
        let n = n_groups * 2;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i / 2) as f64, ((i * 37) % 11) as f64]).collect();
        let y = (0..n).map(|i| u8::from((i / 2) % 3 == 0 || i % 5 == 0)).collect();
        let g = (0..n).map(|i| format!("p{:03}", i / 2)).collect();
        Dataset::new(schema, Matrix::from_rows(&rows, 2).unwrap(), y, g).unwrap()
    }

    #[test]
    fn kfold_keeps_groups_together() {
        let g = groups(&["A", "A", "B", "C"]);
        let plan = grouped_kfold(&g, 2, 9).unwrap();
        assert_eq!(plan.assignment.len(), 3);
        let rf = plan.row_folds(&g).unwrap();
        assert_eq!(rf[0], rf[1]);
        assert_eq!(plan, grouped_kfold(&g, 2, 9).unwrap());
    }

    #[test]
    fn fifty_folds_of_two() {
        let g: Vec<String> = (0..100).map(|i| format!("g{i}")).collect();
        let plan = grouped_kfold(&g, 50, 1).unwrap();
        assert!(plan.group_counts().iter().all(|&c| c == 2));
    }

    #[test]
    fn too_few_groups() {
        assert!(grouped_kfold(&groups(&["a", "b"]), 3, 0).is_err());
        assert!(grouped_kfold(&groups(&["a", "b"]), 1, 0).is_err());
    }

    #[test]
    fn leave_one_group_out_provenance() {
        let ds = toy(3);
        let plan = grouped_kfold(&ds.groups, 3, 4).unwrap();
        let specs = vec![ClassifierSpec::new(LearnerKind::Gbt).with("trees", 5.0)];
        let oof = oof_predict(&specs, &ds, &plan, 1).unwrap();
        verify_provenance(&oof, &plan, &ds.groups).unwrap();
    }

    #[test]
    fn six_specs_six_columns() {
        let ds = toy(30);
        let plan = grouped_kfold(&ds.groups, 5, 2).unwrap();
        let specs: Vec<ClassifierSpec> = LearnerKind::ALL
            .iter()
            .map(|&k| match k {
                LearnerKind::Knn => ClassifierSpec::new(k).with("k_neighbors", 5.0),
                LearnerKind::Lda | LearnerKind::LogRegL1 => ClassifierSpec::new(k),
                _ => ClassifierSpec::new(k).with("trees", 10.0),
            })
            .collect();
        let oof = oof_predict(&specs, &ds, &plan, 1).unwrap();
        assert_eq!(oof.values.n_cols(), 6);
        verify_provenance(&oof, &plan, &ds.groups).unwrap();
    }

    #[test]
    fn tampered_provenance_is_caught() {
        let ds = toy(6);
        let plan = grouped_kfold(&ds.groups, 3, 4).unwrap();
        let mut oof = oof_predict(&[ClassifierSpec::new(LearnerKind::Lda)], &ds, &plan, 1).unwrap();
        oof.provenance[0] = (oof.provenance[0] + 1) % 3;
        assert!(matches!(verify_provenance(&oof, &plan, &ds.groups), Err(Error::Leakage(_))));
    }

    #[test]
    fn flipping_a_group_leaves_its_fold_predictions() {
        let ds = toy(12);
        let plan = grouped_kfold(&ds.groups, 4, 8).unwrap();
        let specs = vec![ClassifierSpec::new(LearnerKind::Gbt).with("trees", 10.0), ClassifierSpec::new(LearnerKind::LogRegL1)];
        let before = oof_predict(&specs, &ds, &plan, 5).unwrap();
        let target = "p004";
        let mut flipped = ds.clone();
        for (y, g) in flipped.labels.iter_mut().zip(&ds.groups) {
            if g == target {
                *y = 1 - *y;
            }
        }
        let after = oof_predict(&specs, &flipped, &plan, 5).unwrap();
        assert_eq!(before.provenance, after.provenance);
        let fold = plan.fold_of(target).unwrap();
        let rf = plan.row_folds(&ds.groups).unwrap();
        for i in (0..ds.len()).filter(|&i| rf[i] == fold) {
            assert_eq!(before.values.row(i), after.values.row(i));
        }
    }

    #[test]
    fn stack_round_trip_and_hash_check() {
        let ds = toy(20);
        let plan = grouped_kfold(&ds.groups, 4, 3).unwrap();
        let specs = vec![ClassifierSpec::new(LearnerKind::Gbt).with("trees", 10.0)];
        let meta = ClassifierSpec::new(LearnerKind::Gbt).with("trees", 10.0).with("max_depth", 2.0);
        let model = fit_stack(&ds, &specs, &meta, &plan, 7).unwrap();
        assert_eq!(model.n_inputs(), 1);
        let back = StackedModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model.predict_rows(&ds.rows).unwrap(), back.predict_rows(&ds.rows).unwrap());
        assert!(back.predict_checked("nope", &ds.rows).is_err());
        let mut tampered = back.clone();
        tampered.schema_hash = "0".repeat(64);
        assert!(StackedModel::from_json(&tampered.to_json().unwrap()).is_err());
    }

    #[test]
    fn grid_selection_tie_rules() {
        let ds = toy(20);
        let plan = grouped_kfold(&ds.groups, 4, 3).unwrap();
        let one = vec![ClassifierSpec::new(LearnerKind::Lda)];
        let sel = select_hyperparams(&one, &ds, &plan, 0).unwrap();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0].best, one[0]);
        // LDA ignores `seed`, so both points tie exactly; the label decides.
        let tied = vec![ClassifierSpec::new(LearnerKind::Lda).with("seed", 2.0), ClassifierSpec::new(LearnerKind::Lda).with("seed", 1.0)];
        let sel = select_hyperparams(&tied, &ds, &plan, 0).unwrap();
        assert_eq!(sel[0].best, tied[1]);
    }

    #[test]
    fn cv_csv_columns() {
        let ds = toy(8);
        let plan = grouped_kfold(&ds.groups, 2, 3).unwrap();
        let cv = cv_metrics(&[("c".into(), vec![0.5; ds.len()])], &ds.labels, &plan, &ds.groups).unwrap();
        let mut buf = Vec::new();
        cv.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("fold,spec,logloss,auc\n0,c,"));
        assert_eq!(cv.summary[0].pooled_auc, 0.5);
    }
}
