//! Feature schema, row encoding and dataset assembly.
//!
//! Rows are stored once in "ordinal" form: numeric cells as-is (`NaN` when
//! missing) and categorical cells as an index into the feature's vocabulary.
//! Tree learners consume that form directly. Linear, neighbor and
//! discriminant learners go through a [`OneHotEncoder`] fitted on training
//! rows only.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{FieldKind, LeadTest, ParcelField, ParcelRecord};
use crate::matrix::Matrix;
use crate::ACTION_LEVEL_PPB;

/// Reserved vocabulary entry for missing or unseen categories.
pub const UNKNOWN: &str = "Unknown";

/// 1 iff the sample exceeds the action level (strictly).
pub fn binarize_label(lead_ppb: f64) -> Result<u8> {
    if !(lead_ppb >= 0.0) {
        return Err(Error::invalid(format!("lead concentration must be >= 0, got {lead_ppb}")));
    }
    Ok(u8::from(lead_ppb > ACTION_LEVEL_PPB))
}

pub fn log1p_lead(lead_ppb: f64) -> Result<f64> {
    if !(lead_ppb >= 0.0) {
        return Err(Error::invalid(format!("lead concentration must be >= 0, got {lead_ppb}")));
    }
    Ok(lead_ppb.ln_1p())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// Sorted vocabulary; the last entry is always [`UNKNOWN`].
    Categorical { vocabulary: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureDef {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: FeatureKind::Numeric }
    }

    /// Categorical feature over the given values (sorted, deduplicated,
    /// `Unknown` appended).
    pub fn categorical<I, S>(name: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = values
            .into_iter()
            .map(|s| s.as_ref().trim().to_string())
            .filter(|s| !s.is_empty() && s != UNKNOWN)
            .collect();
        let mut vocabulary: Vec<String> = set.into_iter().collect();
        vocabulary.push(UNKNOWN.to_string());
        Self { name: name.into(), kind: FeatureKind::Categorical { vocabulary } }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn vocabulary(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { vocabulary } => Some(vocabulary),
            FeatureKind::Numeric => None,
        }
    }

    /// Vocabulary index of `value`; missing or unseen values map to the
    /// Unknown code. Numeric features return `None`.
    pub fn code(&self, value: Option<&str>) -> Option<usize> {
        let vocab = self.vocabulary()?;
        let unknown = vocab.len() - 1;
        let known = &vocab[..unknown];
        Some(
            value
                .map(str::trim)
                .and_then(|v| known.binary_search_by(|probe| probe.as_str().cmp(v)).ok())
                .unwrap_or(unknown),
        )
    }

    pub fn decode(&self, code: usize) -> Option<&str> {
        self.vocabulary()?.get(code).map(String::as_str)
    }

    pub fn unknown_code(&self) -> Option<usize> {
        self.vocabulary().map(|v| v.len() - 1)
    }
}

/// Ordered feature list shared by every model trained on a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for f in &features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::invalid(format!("duplicate feature name `{}`", f.name)));
            }
            if let Some(v) = f.vocabulary() {
                let uniq: BTreeSet<_> = v.iter().collect();
                if uniq.len() != v.len() || v.last().map(String::as_str) != Some(UNKNOWN) {
                    return Err(Error::invalid(format!("bad vocabulary for `{}`", f.name)));
                }
            }
        }
        Ok(Self { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn without(&self, index: usize) -> FeatureSchema {
        let mut features = self.features.clone();
        features.remove(index);
        FeatureSchema { features }
    }

    /// Ordinal row for one parcel.
    pub fn parcel_row(&self, parcel: &ParcelRecord) -> Vec<f64> {
        self.features
            .iter()
            .map(|f| {
                let field = ParcelField::from_name(&f.name);
                match &f.kind {
                    FeatureKind::Numeric => {
                        field.and_then(|fl| parcel.numeric(fl)).unwrap_or(f64::NAN)
                    }
                    FeatureKind::Categorical { .. } => {
                        let value = field.and_then(|fl| parcel.category(fl));
                        f.code(value).expect("categorical") as f64
                    }
                }
            })
            .collect()
    }

    pub fn parcel_matrix(&self, parcels: &[ParcelRecord]) -> Matrix {
        let rows: Vec<Vec<f64>> = parcels.iter().map(|p| self.parcel_row(p)).collect();
        Matrix::from_rows(&rows, self.len()).expect("rows match schema width")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Schema over the parcel attributes: the parcel id and value, acreage,
/// percent, year and coordinate columns are numeric, everything else is
/// categorical with a vocabulary collected from `parcels`.
pub fn build_schema(parcels: &[ParcelRecord]) -> FeatureSchema {
    let features = ParcelField::ALL
        .iter()
        .map(|&field| match field.kind() {
            FieldKind::Id | FieldKind::Numeric => FeatureDef::numeric(field.name()),
            FieldKind::Categorical => {
                FeatureDef::categorical(field.name(), parcels.iter().filter_map(|p| p.category(field)))
            }
        })
        .collect();
    FeatureSchema { features }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    Ordinal,
    OneHot,
}

/// Labeled rows with parcel group keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Matrix,
    pub labels: Vec<u8>,
    pub groups: Vec<String>,
    pub lead_ppb: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Matrix, labels: Vec<u8>, groups: Vec<String>) -> Result<Self> {
        if rows.n_rows() != labels.len() || labels.len() != groups.len() {
            return Err(Error::invalid(format!(
                "rows ({}), labels ({}) and groups ({}) differ in length",
                rows.n_rows(),
                labels.len(),
                groups.len()
            )));
        }
        if rows.n_cols() != schema.len() {
            return Err(Error::invalid(format!(
                "matrix has {} columns but schema has {} features",
                rows.n_cols(),
                schema.len()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        for (j, f) in schema.features.iter().enumerate() {
            if let Some(vocab) = f.vocabulary() {
                for r in rows.rows() {
                    let v = r[j];
                    if !(v >= 0.0 && v.fract() == 0.0 && (v as usize) < vocab.len()) {
                        return Err(Error::invalid(format!(
                            "categorical cell {v} outside vocabulary of `{}`",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(Self { schema, rows, labels, groups, lead_ppb: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn distinct_groups(&self) -> usize {
        self.groups.iter().collect::<BTreeSet<_>>().len()
    }

    /// Copy without raw feature `index` (all of its encoded columns).
    pub fn without_feature(&self, index: usize) -> Dataset {
        Dataset {
            schema: self.schema.without(index),
            rows: self.rows.drop_column(index),
            labels: self.labels.clone(),
            groups: self.groups.clone(),
            lead_ppb: self.lead_ppb.clone(),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: self.rows.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i].clone()).collect(),
            lead_ppb: self.lead_ppb.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// One row per matched test; parcels with several tests contribute several
/// rows under the same group key. Returns the dataset and the number of tests
/// excluded for lacking a known parcel.
pub fn assemble_dataset(
    tests: &[LeadTest],
    parcels: &[ParcelRecord],
    schema: &FeatureSchema,
) -> Result<(Dataset, usize)> {
    let by_pid: HashMap<&str, &ParcelRecord> = parcels.iter().map(|p| (p.pid.as_str(), p)).collect();
    let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut data = Vec::with_capacity(tests.len() * schema.len());
    let mut labels = Vec::with_capacity(tests.len());
    let mut groups = Vec::with_capacity(tests.len());
    let mut lead = Vec::with_capacity(tests.len());
    let mut excluded = 0;
    for t in tests {
        let Some(parcel) = t.pid.as_deref().and_then(|pid| by_pid.get(pid)) else {
            excluded += 1;
            continue;
        };
        let row = cache.entry(parcel.pid.as_str()).or_insert_with(|| schema.parcel_row(parcel));
        data.extend_from_slice(row);
        labels.push(binarize_label(t.lead_ppb)?);
        groups.push(parcel.pid.clone());
        lead.push(t.lead_ppb);
    }
    let rows = Matrix::new(labels.len(), schema.len(), data)?;
    let mut ds = Dataset::new(schema.clone(), rows, labels, groups)?;
    ds.lead_ppb = Some(lead);
    Ok((ds, excluded))
}

/// Maps an encoded column back to its schema feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    pub feature: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub matrix: Matrix,
    pub columns: Vec<ColumnDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    /// `(x - mean) / scale`, with missing cells replaced by `median` first.
    Numeric { mean: f64, scale: f64, median: f64 },
    /// Indicator columns for the listed codes followed by one Unknown slot.
    Categorical { codes: Vec<usize> },
}

/// One-hot/standardizing encoder. All statistics come from the rows passed
/// to [`OneHotEncoder::fit`]; rows encoded later reuse them verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    pub columns: Vec<ColumnEncoding>,
    pub width: usize,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

impl OneHotEncoder {
    pub fn fit(schema: &FeatureSchema, rows: &Matrix, train: &[usize]) -> Self {
        let mut columns = Vec::with_capacity(schema.len());
        let mut width = 0;
        for (j, f) in schema.features.iter().enumerate() {
            match &f.kind {
                FeatureKind::Numeric => {
                    let mut present: Vec<f64> =
                        train.iter().map(|&i| rows.get(i, j)).filter(|v| !v.is_nan()).collect();
                    let median = median(&mut present).unwrap_or(0.0);
                    let n = train.len().max(1) as f64;
                    let filled = || train.iter().map(|&i| rows.get(i, j)).map(|v| if v.is_nan() { median } else { v });
                    let mean = filled().sum::<f64>() / n;
                    let var = filled().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    let scale = if sd > 1e-12 && sd.is_finite() { sd } else { 1.0 };
                    let mean = if train.is_empty() { 0.0 } else { mean };
                    columns.push(ColumnEncoding::Numeric { mean, scale, median });
                    width += 1;
                }
                FeatureKind::Categorical { vocabulary } => {
                    let unknown = vocabulary.len() - 1;
                    let seen: BTreeSet<usize> = train
                        .iter()
                        .map(|&i| rows.get(i, j) as usize)
                        .filter(|&c| c != unknown)
                        .collect();
                    width += seen.len() + 1;
                    columns.push(ColumnEncoding::Categorical { codes: seen.into_iter().collect() });
                }
            }
        }
        Self { columns, width }
    }

    pub fn encode_row_into(&self, row: &[f64], out: &mut Vec<f64>) {
        for (v, enc) in row.iter().zip(&self.columns) {
            match enc {
                ColumnEncoding::Numeric { mean, scale, median } => {
                    let x = if v.is_nan() { *median } else { *v };
                    out.push((x - mean) / scale);
                }
                ColumnEncoding::Categorical { codes } => {
                    let hit = if v.is_nan() { None } else { codes.binary_search(&(*v as usize)).ok() };
                    let start = out.len();
                    out.resize(start + codes.len() + 1, 0.0);
                    out[start + hit.unwrap_or(codes.len())] = 1.0;
                }
            }
        }
    }

    pub fn encode_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width);
        self.encode_row_into(row, &mut out);
        out
    }

    pub fn encode(&self, rows: &Matrix, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.width);
        for &i in idx {
            self.encode_row_into(rows.row(i), &mut data);
        }
        Matrix::new(idx.len(), self.width, data).expect("encoded width")
    }

    pub fn encode_all(&self, rows: &Matrix) -> Matrix {
        let idx: Vec<usize> = (0..rows.n_rows()).collect();
        self.encode(rows, &idx)
    }

    pub fn descriptors(&self, schema: &FeatureSchema) -> Vec<ColumnDescriptor> {
        let mut out = Vec::with_capacity(self.width);
        for (j, (f, enc)) in schema.features.iter().zip(&self.columns).enumerate() {
            match enc {
                ColumnEncoding::Numeric { .. } => out.push(ColumnDescriptor { feature: j, label: f.name.clone() }),
                ColumnEncoding::Categorical { codes } => {
                    for &c in codes {
                        let value = f.decode(c).unwrap_or("?");
                        out.push(ColumnDescriptor { feature: j, label: format!("{}={value}", f.name) });
                    }
                    out.push(ColumnDescriptor { feature: j, label: format!("{}={UNKNOWN}", f.name) });
                }
            }
        }
        out
    }
}

/// Encodes the selected rows in the requested mode. One-hot statistics are
/// fitted on `train` and applied to `rows`.
pub fn encode_rows(
    schema: &FeatureSchema,
    data: &Matrix,
    train: &[usize],
    rows: &[usize],
    mode: EncodingMode,
) -> EncodedMatrix {
    match mode {
        EncodingMode::Ordinal => EncodedMatrix {
            matrix: data.select_rows(rows),
            columns: schema
                .features
                .iter()
                .enumerate()
                .map(|(j, f)| ColumnDescriptor { feature: j, label: f.name.clone() })
                .collect(),
        },
        EncodingMode::OneHot => {
            let enc = OneHotEncoder::fit(schema, data, train);
            EncodedMatrix { matrix: enc.encode(data, rows), columns: enc.descriptors(schema) }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_threshold_is_strict() {
        assert_eq!(binarize_label(16.0).unwrap(), 1);
        assert_eq!(binarize_label(15.0).unwrap(), 0);
        assert_eq!(binarize_label(0.0).unwrap(), 0);
        assert!(binarize_label(-0.5).is_err());
        assert!(binarize_label(f64::NAN).is_err());
    }

    #[test]
    fn log1p_values() {
        assert_eq!(log1p_lead(0.0).unwrap(), 0.0);
        assert!((log1p_lead(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((log1p_lead(104.0).unwrap() - 4.653_960_350_157_523).abs() < 1e-12);
        assert!(log1p_lead(-1.0).is_err());
    }

    fn parcel(pid: &str, sl: Option<&str>) -> ParcelRecord {
        let mut p = ParcelRecord::new(pid);
        p.sl_type = sl.map(String::from);
        p
    }

    #[test]
    fn schema_vocabulary_rules() {
        let parcels = vec![parcel("1", Some("Lead")), parcel("2", Some("Copper")), parcel("3", None)];
        let schema = build_schema(&parcels);
        assert_eq!(schema.len(), 35);
        let sl = &schema.features[schema.index_of("sl_type").unwrap()];
        assert_eq!(sl.vocabulary().unwrap(), &["Copper", "Lead", "Unknown"]);
        let ward = &schema.features[schema.index_of("ward").unwrap()];
        assert_eq!(ward.vocabulary().unwrap(), &["Unknown"]);
        assert!(!schema.features[schema.index_of("pid").unwrap()].is_categorical());
        assert!(!schema.features[schema.index_of("year_built").unwrap()].is_categorical());
        assert_eq!(schema.features.iter().filter(|f| !f.is_categorical()).count(), 13);
    }

    #[test]
    fn onehot_known_and_unseen() {
        let f = FeatureDef::categorical("sl_type", ["Lead", "Copper"]);
        let schema = FeatureSchema::new(vec![f.clone()]).unwrap();
        let train = Matrix::from_rows(&[vec![0.0], vec![1.0]], 1).unwrap();
        let enc = OneHotEncoder::fit(&schema, &train, &[0, 1]);
        let copper = f.code(Some("Copper")).unwrap() as f64;
        assert_eq!(enc.encode_row(&[copper]), vec![1.0, 0.0, 0.0]);
        let brass = f.code(Some("Brass")).unwrap() as f64;
        assert_eq!(enc.encode_row(&[brass]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn standardization_hand_values() {
        let schema = FeatureSchema::new(vec![FeatureDef::numeric("x")]).unwrap();
        let m = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]], 1).unwrap();
        let enc = OneHotEncoder::fit(&schema, &m, &[0, 1, 2]);
        let z: Vec<f64> = (0..3).map(|i| enc.encode_row(m.row(i))[0]).collect();
        // population sd of {1,2,3} is sqrt(2/3)
        let s = (2.0f64 / 3.0).sqrt();
        for (a, b) in z.iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
            assert!((a - b).abs() < 1e-12);
        }
        let mean: f64 = z.iter().sum::<f64>() / 3.0;
        let var: f64 = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_numeric_uses_training_median() {
        let schema = FeatureSchema::new(vec![FeatureDef::numeric("x")]).unwrap();
        let m = Matrix::from_rows(&[vec![1.0], vec![5.0], vec![9.0], vec![f64::NAN], vec![1000.0]], 1).unwrap();
        let enc = OneHotEncoder::fit(&schema, &m, &[0, 1, 2, 3]);
        match &enc.columns[0] {
            ColumnEncoding::Numeric { median, .. } => assert_eq!(*median, 5.0),
            _ => unreachable!(),
        }
        // row 4 is not a training row so cannot move the statistics
        let perturbed = Matrix::from_rows(&[vec![1.0], vec![5.0], vec![9.0], vec![f64::NAN], vec![-3.0]], 1).unwrap();
        assert_eq!(enc, OneHotEncoder::fit(&schema, &perturbed, &[0, 1, 2, 3]));
    }

    #[test]
    fn assemble_preserves_multiplicity() {
        let parcels = vec![parcel("P", Some("Lead")), parcel("Q", None)];
        let schema = build_schema(&parcels);
        let t = |pid: Option<&str>, lead| LeadTest {
            sample_date: None,
            lead_ppb: lead,
            copper_ppb: None,
            address: String::new(),
            pid: pid.map(String::from),
        };
        let tests = vec![t(Some("P"), 20.0), t(Some("P"), 1.0), t(Some("P"), 15.0), t(None, 3.0), t(Some("Z"), 3.0)];
        let (ds, excluded) = assemble_dataset(&tests, &parcels, &schema).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(excluded, 2);
        assert!(ds.groups.iter().all(|g| g == "P"));
        assert_eq!(ds.labels, vec![1, 0, 0]);
        let (empty, _) = assemble_dataset(&[], &parcels, &schema).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn schema_hash_changes_with_vocabulary() {
        let a = build_schema(&[parcel("1", Some("Lead"))]);
        let b = build_schema(&[parcel("1", Some("Copper"))]);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }

    #[test]
    fn schema_json_round_trip() {
        let s = build_schema(&[parcel("1", Some("Lead"))]);
        let back: FeatureSchema = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
