//! First-layer classifiers and the boosted meta learner behind one
//! fit/predict-probability contract.

pub mod forest;
pub mod gbt;
pub mod knn;
pub mod lda;
pub mod logreg;
pub mod spec;
pub mod tree;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, ForestModel, ForestVariant};
pub use gbt::{fit_gbt, GbtModel};
pub use knn::{fit_knn, KnnModel};
pub use lda::{fit_lda, LdaModel};
pub use logreg::{fit_logreg_l1, LogRegModel};
pub use spec::{ClassifierSpec, ForestParams, GbtParams, LearnerKind, LogRegParams};

use crate::error::{Error, Result};
use crate::features::{Dataset, EncodingMode, OneHotEncoder};
use crate::matrix::Matrix;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Gbt(GbtModel),
    Forest(ForestModel),
    LogReg(LogRegModel),
    Knn(KnnModel),
    Lda(LdaModel),
    /// Fallback when the training labels hold a single class.
    Constant { probability: f64 },
}

impl Model {
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        match self {
            Model::Gbt(m) => m.predict(row),
            Model::Forest(m) => m.predict(row),
            Model::LogReg(m) => m.predict(row),
            Model::Knn(m) => m.predict(row),
            Model::Lda(m) => m.predict(row),
            Model::Constant { probability } => Ok(*probability),
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        (0..x.n_rows()).into_par_iter().map(|i| self.predict(x.row(i))).collect()
    }
}

/// Fits `spec` on already-encoded inputs.
pub fn fit_model(spec: &ClassifierSpec, x: &Matrix, y: &[u8], seed: u64) -> Result<Model> {
    spec.validate()?;
    let seed = derive_seed(seed, &[spec.seed_offset()]);
    Ok(match spec.kind {
        LearnerKind::Gbt => Model::Gbt(fit_gbt(x, y, &spec.gbt_params()?)?),
        LearnerKind::RandomForest => {
            Model::Forest(fit_forest(x, y, &spec.forest_params()?, ForestVariant::RandomForest, seed)?)
        }
        LearnerKind::ExtraTrees => {
            Model::Forest(fit_forest(x, y, &spec.forest_params()?, ForestVariant::ExtraTrees, seed)?)
        }
        LearnerKind::LogRegL1 => Model::LogReg(fit_logreg_l1(x, y, &spec.logreg_params()?)?),
        LearnerKind::Knn => Model::Knn(fit_knn(x, y, spec.k_neighbors()?)?),
        LearnerKind::Lda => Model::Lda(fit_lda(x, y)?),
    })
}

/// A model together with the encoder that turns raw ordinal rows into its
/// input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLearner {
    pub spec: ClassifierSpec,
    pub encoder: Option<OneHotEncoder>,
    pub model: Model,
    pub warnings: Vec<String>,
}

impl FittedLearner {
    /// Predicts raw (ordinal) schema rows.
    pub fn predict_rows(&self, rows: &Matrix) -> Result<Vec<f64>> {
        match &self.encoder {
            Some(enc) => self.model.predict_matrix(&enc.encode_all(rows)),
            None => self.model.predict_matrix(rows),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        match &self.encoder {
            Some(enc) => self.model.predict(&enc.encode_row(row)),
            None => self.model.predict(row),
        }
    }
}

/// Fits `spec` on the dataset rows listed in `train`. Encoder statistics come
/// from those rows only. Single-class training labels give a constant model
/// at the training prior.
pub fn fit_learner(spec: &ClassifierSpec, data: &Dataset, train: &[usize], seed: u64) -> Result<FittedLearner> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::invalid(format!("{}: empty training set", spec.label())));
    }
    let y: Vec<u8> = train.iter().map(|&i| data.labels[i]).collect();
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        let prior = positives as f64 / y.len() as f64;
        let msg = format!("{}: single-class training labels, predicting prior {prior}", spec.label());
        warn!("{msg}");
        return Ok(FittedLearner {
            spec: spec.clone(),
            encoder: None,
            model: Model::Constant { probability: prior },
            warnings: vec![msg],
        });
    }
    let (encoder, x) = match spec.kind.encoding() {
        EncodingMode::Ordinal => (None, data.rows.select_rows(train)),
        EncodingMode::OneHot => {
            let enc = OneHotEncoder::fit(&data.schema, &data.rows, train);
            let x = enc.encode(&data.rows, train);
            (Some(enc), x)
        }
    };
    let model = fit_model(spec, &x, &y, seed)?;
    let mut warnings = Vec::new();
    if let Model::Lda(m) = &model {
        if m.jitter > 0.0 {
            warnings.push(format!("{}: singular covariance, jitter {:e}", spec.label(), m.jitter));
        }
    }
    Ok(FittedLearner { spec: spec.clone(), encoder, model, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureDef, FeatureSchema};

    fn toy() -> Dataset {
        let schema = FeatureSchema::new(vec![
            FeatureDef::numeric("x"),
            FeatureDef::categorical("c", ["a", "b"]),
        ])
        .unwrap();
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 4.0, (i % 3 % 2) as f64]).collect();
        let y = (0..40).map(|i| u8::from(i >= 22 || i % 7 == 0)).collect();
        let groups = (0..40).map(|i| format!("g{}", i / 2)).collect();
        Dataset::new(schema, Matrix::from_rows(&rows, 2).unwrap(), y, groups).unwrap()
    }

    #[test]
    fn every_kind_predicts_probabilities() {
        let ds = toy();
        let train: Vec<usize> = (0..40).collect();
        for kind in LearnerKind::ALL {
            let spec = match kind {
                LearnerKind::Knn => ClassifierSpec::new(kind).with("k_neighbors", 5.0),
                LearnerKind::Gbt => ClassifierSpec::new(kind).with("trees", 20.0),
                LearnerKind::RandomForest | LearnerKind::ExtraTrees => ClassifierSpec::new(kind).with("trees", 20.0),
                _ => ClassifierSpec::new(kind),
            };
            let fitted = fit_learner(&spec, &ds, &train, 3).unwrap();
            let p = fitted.predict_rows(&ds.rows).unwrap();
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)), "{kind}");
            assert_eq!(p.len(), 40);
        }
    }

    #[test]
    fn single_class_falls_back_to_prior() {
        let ds = toy();
        let fitted = fit_learner(&ClassifierSpec::new(LearnerKind::Lda), &ds, &[1, 2, 3], 0).unwrap();
        assert_eq!(fitted.model, Model::Constant { probability: 0.0 });
        assert_eq!(fitted.warnings.len(), 1);
    }
}
