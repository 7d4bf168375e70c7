use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::EncodingMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Gbt,
    RandomForest,
    ExtraTrees,
    LogRegL1,
    Knn,
    Lda,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::Gbt,
        LearnerKind::RandomForest,
        LearnerKind::ExtraTrees,
        LearnerKind::LogRegL1,
        LearnerKind::Knn,
        LearnerKind::Lda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Gbt => "gbt",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::ExtraTrees => "extra_trees",
            LearnerKind::LogRegL1 => "logreg_l1",
            LearnerKind::Knn => "knn",
            LearnerKind::Lda => "lda",
        }
    }

    pub fn parse(s: &str) -> Option<LearnerKind> {
        let s = s.trim().to_ascii_lowercase();
        Some(match s.as_str() {
            "gbt" | "xgboost" | "boosted_trees" => LearnerKind::Gbt,
            "random_forest" | "rf" => LearnerKind::RandomForest,
            "extra_trees" | "extratrees" | "et" => LearnerKind::ExtraTrees,
            "logreg_l1" | "logreg" | "logistic_regression" => LearnerKind::LogRegL1,
            "knn" => LearnerKind::Knn,
            "lda" => LearnerKind::Lda,
            _ => return None,
        })
    }

    /// Trees consume ordinal category codes; the rest take one-hot input.
    pub fn encoding(self) -> EncodingMode {
        match self {
            LearnerKind::Gbt | LearnerKind::RandomForest | LearnerKind::ExtraTrees => EncodingMode::Ordinal,
            _ => EncodingMode::OneHot,
        }
    }

    fn allowed_keys(self) -> &'static [&'static str] {
        match self {
            LearnerKind::Gbt => &["trees", "max_depth", "learning_rate", "l2_lambda", "min_leaf", "seed"],
            LearnerKind::RandomForest | LearnerKind::ExtraTrees => {
                &["trees", "max_depth", "feature_subsample", "min_leaf", "seed"]
            }
            LearnerKind::LogRegL1 => &["l1_strength", "max_iter", "seed"],
            LearnerKind::Knn => &["k_neighbors", "seed"],
            LearnerKind::Lda => &["seed"],
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A learner family plus hyperparameters. Absent keys take the defaults
/// returned by the typed accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: LearnerKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub min_leaf: usize,
    /// Initial margin; `None` uses the log-odds of the training prior.
    pub base_score: Option<f64>,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { trees: 200, max_depth: 5, learning_rate: 0.1, l2_lambda: 1.0, min_leaf: 1, base_score: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    /// Fraction of features examined per split; `None` means `sqrt(d)`.
    pub feature_subsample: Option<f64>,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { trees: 1000, max_depth: 9, feature_subsample: None, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub l1_strength: f64,
    pub max_iter: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self { l1_strength: 0.001, max_iter: 1000 }
    }
}

impl ClassifierSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self { kind, params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// The six learner families with their default hyperparameters.
    pub fn default_first_layer() -> Vec<ClassifierSpec> {
        LearnerKind::ALL.iter().map(|&k| ClassifierSpec::new(k)).collect()
    }

    /// Meta learner default: 800 trees of depth 8.
    pub fn default_meta() -> ClassifierSpec {
        ClassifierSpec::new(LearnerKind::Gbt).with("trees", 800.0).with("max_depth", 8.0)
    }

    /// Short human label, e.g. `gbt(max_depth=3,trees=50)`.
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            return self.kind.name().to_string();
        }
        let inner: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.kind.name(), inner.join(","))
    }

    pub fn seed_offset(&self) -> u64 {
        self.params.get("seed").map_or(0, |&s| s as u64)
    }

    fn get(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    fn count(&self, key: &str, default: usize, min: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) if v.fract() == 0.0 && v >= min as f64 && v <= 1e9 => Ok(v as usize),
            Some(v) => Err(Error::InvalidSpec(format!("{}: `{key}` must be an integer >= {min}, got {v}", self.kind))),
        }
    }

    fn real(&self, key: &str, default: f64, ok: impl Fn(f64) -> bool, what: &str) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) if v.is_finite() && ok(v) => Ok(v),
            Some(v) => Err(Error::InvalidSpec(format!("{}: `{key}` must be {what}, got {v}", self.kind))),
        }
    }

    /// Checks that every key belongs to the learner and every value is in
    /// range.
    pub fn validate(&self) -> Result<()> {
        let allowed = self.kind.allowed_keys();
        if let Some(bad) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidSpec(format!(
                "{}: unknown hyperparameter `{bad}` (allowed: {})",
                self.kind,
                allowed.join(", ")
            )));
        }
        self.count("seed", 0, 0)?;
        match self.kind {
            LearnerKind::Gbt => self.gbt_params().map(|_| ()),
            LearnerKind::RandomForest | LearnerKind::ExtraTrees => self.forest_params().map(|_| ()),
            LearnerKind::LogRegL1 => self.logreg_params().map(|_| ()),
            LearnerKind::Knn => self.k_neighbors().map(|_| ()),
            LearnerKind::Lda => Ok(()),
        }
    }

    pub fn gbt_params(&self) -> Result<GbtParams> {
        let d = GbtParams::default();
        Ok(GbtParams {
            trees: self.count("trees", d.trees, 0)?,
            max_depth: self.count("max_depth", d.max_depth, 0)?,
            learning_rate: self.real("learning_rate", d.learning_rate, |v| v > 0.0 && v <= 1.0, "in (0, 1]")?,
            l2_lambda: self.real("l2_lambda", d.l2_lambda, |v| v >= 0.0, ">= 0")?,
            min_leaf: self.count("min_leaf", d.min_leaf, 1)?,
            base_score: None,
        })
    }

    pub fn forest_params(&self) -> Result<ForestParams> {
        let d = ForestParams::default();
        let feature_subsample = match self.get("feature_subsample") {
            None => None,
            Some(v) if v > 0.0 && v <= 1.0 => Some(v),
            Some(v) => {
                return Err(Error::InvalidSpec(format!("{}: `feature_subsample` must be in (0, 1], got {v}", self.kind)))
            }
        };
        Ok(ForestParams {
            trees: self.count("trees", d.trees, 1)?,
            max_depth: self.count("max_depth", d.max_depth, 0)?,
            feature_subsample,
            min_leaf: self.count("min_leaf", d.min_leaf, 1)?,
        })
    }

    pub fn logreg_params(&self) -> Result<LogRegParams> {
        let d = LogRegParams::default();
        Ok(LogRegParams {
            l1_strength: self.real("l1_strength", d.l1_strength, |v| v >= 0.0, ">= 0")?,
            max_iter: self.count("max_iter", d.max_iter, 1)?,
        })
    }

    pub fn k_neighbors(&self) -> Result<usize> {
        self.count("k_neighbors", 100, 1)
    }

    /// Number of trees, used when ranking otherwise-equal grid points.
    pub fn tree_count(&self) -> usize {
        match self.kind {
            LearnerKind::Gbt => self.gbt_params().map(|p| p.trees).unwrap_or(0),
            LearnerKind::RandomForest | LearnerKind::ExtraTrees => {
                self.forest_params().map(|p| p.trees).unwrap_or(0)
            }
            _ => 0,
        }
    }

    /// Regularization strength, larger meaning simpler models.
    pub fn regularization(&self) -> f64 {
        match self.kind {
            LearnerKind::Gbt => self.gbt_params().map(|p| p.l2_lambda).unwrap_or(0.0),
            LearnerKind::LogRegL1 => self.logreg_params().map(|p| p.l1_strength).unwrap_or(0.0),
            LearnerKind::Knn => self.k_neighbors().map(|k| k as f64).unwrap_or(0.0),
            _ => 0.0,
        }
    }
}
