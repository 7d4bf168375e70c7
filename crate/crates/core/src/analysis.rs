//! Descriptive summaries of log lead by service-line label and construction
//! decade, plus risk-map and test-location exports.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::features::{log1p_lead, UNKNOWN};
use crate::ingest::{LeadTest, ParcelRecord, ServiceLineRecord};
use crate::metrics::bootstrap_mean_ci;
use crate::pipeline::StackedModel;
use crate::rng::stream;

pub const OTHER: &str = "Other";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub key: String,
    pub n: usize,
    pub mean_log_lead: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn summarize(groups: Vec<(String, Vec<f64>)>, replicates: usize, seed: u64) -> Vec<GroupSummary> {
    groups
        .into_iter()
        .enumerate()
        .filter(|(_, (_, v))| !v.is_empty())
        .map(|(i, (key, values))| {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let (ci_low, ci_high) = if replicates == 0 {
                (mean, mean)
            } else {
                bootstrap_mean_ci(&values, replicates, &mut stream(seed, &[i as u64]))
            };
            GroupSummary { key, n: values.len(), mean_log_lead: mean, ci_low, ci_high }
        })
        .collect()
}

/// Mean `log(1 + lead)` per raw service-line label, keys sorted. Tests on
/// parcels without a record, or with a blank label, fall under Unknown.
pub fn mean_log_lead_by_sl_type(
    tests: &[LeadTest],
    records: &[ServiceLineRecord],
    replicates: usize,
    seed: u64,
) -> Result<Vec<GroupSummary>> {
    let labels: HashMap<&str, &str> = records.iter().map(|r| (r.pid.as_str(), r.raw_label.trim())).collect();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in tests {
        let Some(pid) = t.pid.as_deref() else { continue };
        let label = labels.get(pid).copied().filter(|l| !l.is_empty()).unwrap_or(UNKNOWN);
        groups.entry(label.to_string()).or_default().push(log1p_lead(t.lead_ppb)?);
    }
    Ok(summarize(groups.into_iter().collect(), replicates, seed))
}

/// `floor(year / 10) * 10` when that decade lies in `[first, last]`.
pub fn decade_key(year: f64, first: i32, last: i32) -> Option<i32> {
    if !year.is_finite() {
        return None;
    }
    let d = (year / 10.0).floor() as i32 * 10;
    (d >= first && d <= last).then_some(d)
}

/// Mean `log(1 + lead)` per construction decade in `[first, last]`, in
/// ascending order, followed by an Other bucket for every remaining matched
/// test (out-of-range or missing year).
pub fn mean_log_lead_by_decade(
    tests: &[LeadTest],
    parcels: &[ParcelRecord],
    first: i32,
    last: i32,
    replicates: usize,
    seed: u64,
) -> Result<Vec<GroupSummary>> {
    let years: HashMap<&str, Option<f64>> = parcels.iter().map(|p| (p.pid.as_str(), p.year_built)).collect();
    let mut decades: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    let mut other = Vec::new();
    for t in tests {
        let Some(year) = t.pid.as_deref().and_then(|pid| years.get(pid)) else { continue };
        let v = log1p_lead(t.lead_ppb)?;
        match year.and_then(|y| decade_key(y, first, last)) {
            Some(d) => decades.entry(d).or_default().push(v),
            None => other.push(v),
        }
    }
    let mut groups: Vec<(String, Vec<f64>)> = decades.into_iter().map(|(d, v)| (d.to_string(), v)).collect();
    groups.push((OTHER.to_string(), other));
    Ok(summarize(groups, replicates, seed))
}

pub fn write_group_summaries<W: Write>(rows: &[GroupSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "n", "mean_log_lead", "ci_low", "ci_high"])?;
    for r in rows {
        w.write_record([
            r.key.clone(),
            r.n.to_string(),
            r.mean_log_lead.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(year_built, sl_type)` for every parcel carrying both.
pub fn sl_type_year_points(parcels: &[ParcelRecord]) -> Vec<(f64, String)> {
    parcels
        .iter()
        .filter_map(|p| {
            let label = p.sl_type.as_deref().map(str::trim).filter(|s| !s.is_empty())?;
            Some((p.year_built?, label.to_string()))
        })
        .collect()
}

pub fn write_year_points<W: Write>(points: &[(f64, String)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["year_built", "sl_type"])?;
    for (y, l) in points {
        w.write_record([y.to_string(), l.clone()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEntry {
    pub pid: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMap {
    pub threshold: f64,
    /// Every parcel, in input order.
    pub entries: Vec<RiskEntry>,
}

impl RiskMap {
    /// Entries drawn on the map: probability above the threshold and
    /// coordinates present.
    pub fn mapped(&self) -> impl Iterator<Item = &RiskEntry> {
        self.entries
            .iter()
            .filter(move |e| e.probability > self.threshold && e.latitude.is_some() && e.longitude.is_some())
    }

    /// Parcels above the threshold left off the map for lack of coordinates.
    pub fn missing_coordinates(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.probability > self.threshold && (e.latitude.is_none() || e.longitude.is_none()))
            .count()
    }

    /// Columns: pid, latitude, longitude, probability.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pid", "latitude", "longitude", "probability"])?;
        for e in &self.entries {
            w.write_record([e.pid.clone(), opt(e.latitude), opt(e.longitude), e.probability.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// GeoJSON FeatureCollection of Point features in `[lon, lat]` order.
    pub fn to_geojson(&self) -> serde_json::Value {
        let features: Vec<serde_json::Value> = self
            .mapped()
            .map(|e| {
                json!({
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [e.longitude, e.latitude]},
                    "properties": {"pid": e.pid, "probability": e.probability},
                })
            })
            .collect();
        json!({"type": "FeatureCollection", "features": features})
    }

    pub fn write_geojson<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.to_geojson())?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

/// Scores every parcel with the stacked model.
pub fn risk_map(model: &StackedModel, parcels: &[ParcelRecord], threshold: f64) -> Result<RiskMap> {
    let rows = model.schema.parcel_matrix(parcels);
    let p = model.predict_rows(&rows)?;
    let entries = parcels
        .iter()
        .zip(p)
        .map(|(parcel, probability)| RiskEntry {
            pid: parcel.pid.clone(),
            latitude: parcel.latitude,
            longitude: parcel.longitude,
            probability,
        })
        .collect();
    Ok(RiskMap { threshold, entries })
}

/// Writes `latitude, longitude, lead_ppb` for every matched test whose parcel
/// has coordinates. Returns the row count.
pub fn test_heatmap_export<W: Write>(tests: &[LeadTest], parcels: &[ParcelRecord], out: W) -> Result<usize> {
    let coords: HashMap<&str, (f64, f64)> =
        parcels.iter().filter_map(|p| Some((p.pid.as_str(), p.coords()?))).collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["latitude", "longitude", "lead_ppb"])?;
    let mut n = 0;
    for t in tests {
        if let Some((lat, lon)) = t.pid.as_deref().and_then(|pid| coords.get(pid)) {
            w.write_record([lat.to_string(), lon.to_string(), t.lead_ppb.to_string()])?;
            n += 1;
        }
    }
    w.flush()?;
    Ok(n)
}
