//! Synthetic city with a known risk function.
//!
//! Parcels sit in spatial clusters. Each parcel's probability of a test above
//! the action level is `σ(b + s_i)`, where `s_i` combines a cluster offset,
//! building age, a lead-bearing service line, land value and an optional
//! noise column, and `b` is solved by bisection to hit the target rate. Lead
//! values are log-normal with `P(lead > 15) = p_i`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::features::{Dataset, FeatureDef, FeatureSchema};
use crate::ingest::{
    split_sl_label, write_hydrants, write_parcels, write_service_lines, write_tests, HydrantRecord, LeadTest,
    Material, ParcelRecord, ServiceLineRecord,
};
use crate::learners::gbt::sigmoid;
use crate::matrix::Matrix;
use crate::metrics::auc;
use crate::rng::stream;
use crate::ACTION_LEVEL_PPB;

pub const PARCELS_FILE: &str = "parcels.csv";
pub const TESTS_FILE: &str = "tests.csv";
pub const SERVICE_LINES_FILE: &str = "service_lines.csv";
pub const HYDRANTS_FILE: &str = "hydrants.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Coefficients of the risk logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Signals {
    /// Standard deviation of the per-cluster offset.
    pub cluster: f64,
    /// Height of a Gaussian risk bump centred on the old city core.
    pub hotspot: f64,
    /// Scale of a smooth age step centred on 1945.
    pub year_built: f64,
    /// Added when the service line contains lead or galvanized steel, with a
    /// larger effect in homes built before about 1945.
    pub sl_material: f64,
    /// Per standard deviation of log land value (higher value, lower risk).
    pub land_value: f64,
    /// Per standard deviation of parcel acreage.
    pub noise: f64,
}

impl Default for Signals {
    fn default() -> Self {
        Self { cluster: 0.5, hotspot: 1.5, year_built: 0.7, sl_material: 1.2, land_value: 0.4, noise: 0.0 }
    }
}

impl Signals {
    pub fn zero() -> Self {
        Self { cluster: 0.0, hotspot: 0.0, year_built: 0.0, sl_material: 0.0, land_value: 0.0, noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_parcels: usize,
    /// Extra probability of a parcel having no tests.
    pub p_zero: f64,
    /// Poisson mean of the test count for parcels that are tested.
    pub tests_lambda: f64,
    pub target_rate: f64,
    pub n_clusters: usize,
    /// Cluster spread in degrees.
    pub cluster_spread: f64,
    /// Log-scale standard deviation of lead values.
    pub lead_sigma: f64,
    /// Fraction of service-line labels recorded as Unknown regardless of the
    /// true material.
    pub label_noise: f64,
    pub signals: Signals,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_parcels: 4000,
            p_zero: 0.3,
            tests_lambda: 2.86,
            target_rate: 0.083,
            n_clusters: 12,
            cluster_spread: 0.008,
            lead_sigma: 1.2,
            label_noise: 0.08,
            signals: Signals::default(),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_parcels == 0 {
            return Err(Error::invalid("n_parcels must be at least 1"));
        }
        if !(self.target_rate > 0.0 && self.target_rate < 1.0) {
            return Err(Error::invalid(format!("target rate {} outside (0, 1)", self.target_rate)));
        }
        if !(0.0..=1.0).contains(&self.p_zero) || !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::invalid("p_zero and label_noise must lie in [0, 1]"));
        }
        if !(self.tests_lambda > 0.0 && self.tests_lambda.is_finite()) {
            return Err(Error::invalid("tests_lambda must be positive"));
        }
        if !(self.lead_sigma > 0.0 && self.lead_sigma.is_finite()) {
            return Err(Error::invalid("lead_sigma must be positive"));
        }
        if self.n_clusters == 0 || !(self.cluster_spread >= 0.0) {
            return Err(Error::invalid("need at least one cluster and a non-negative spread"));
        }
        let s = &self.signals;
        if ![s.cluster, s.hotspot, s.year_built, s.sl_material, s.land_value, s.noise].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("signal coefficients must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelTruth {
    pub probability: f64,
    /// Log-scale location of the lead distribution.
    pub log_mu: f64,
    pub lead_bearing: bool,
    pub tests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intercept: f64,
    pub lead_sigma: f64,
    pub target_rate: f64,
    /// Test-weighted mean of the parcel probabilities.
    pub expected_rate: f64,
    pub parcels: BTreeMap<String, ParcelTruth>,
}

impl GroundTruth {
    pub fn probability(&self, pid: &str) -> Option<f64> {
        self.parcels.get(pid).map(|p| p.probability)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub parcels: Vec<ParcelRecord>,
    pub tests: Vec<LeadTest>,
    pub service_lines: Vec<ServiceLineRecord>,
    pub hydrants: Vec<HydrantRecord>,
    pub truth: GroundTruth,
}

/// Solves `Σ wᵢ σ(b + sᵢ) / Σ wᵢ = target` for `b` by bisection.
pub fn solve_intercept(scores: &[f64], weights: &[f64], target: f64) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if scores.is_empty() || total <= 0.0 {
        return Err(Error::invalid("intercept search needs at least one weighted parcel"));
    }
    let rate = |b: f64| scores.iter().zip(weights).map(|(s, w)| w * sigmoid(b + s)).sum::<f64>() / total;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = 0.5 * (lo + hi);
    let achieved = rate(b);
    if (achieved - target).abs() > 0.002 {
        return Err(Error::invalid(format!(
            "target rate {target} unreachable with these coefficients (closest {achieved:.4})"
        )));
    }
    Ok(b)
}

/// Log-normal location whose exceedance probability over the action level
/// is `p`.
pub fn lead_log_mu(p: f64, sigma: f64) -> f64 {
    let z = StdNormal::standard().inverse_cdf(p);
    ACTION_LEVEL_PPB.ln() + sigma * z
}

pub fn draw_lead(log_mu: f64, sigma: f64, rng: &mut impl Rng) -> f64 {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    (log_mu + sigma * z).exp()
}

const CORE: (f64, f64) = (43.02, -83.69);
const CORE_RADIUS: f64 = 0.015;
const STREETS: [&str; 12] =
    ["Maple", "Oak", "Pine", "Cedar", "Elm", "Walnut", "Birch", "Chestnut", "Spruce", "Willow", "Ash", "Poplar"];
const SUFFIXES: [(&str, &str); 4] = [("St.", "Street"), ("Ave.", "Avenue"), ("Rd.", "Road"), ("Dr.", "Drive")];
const ZIPS: [&str; 6] = ["48503", "48504", "48505", "48506", "48507", "48532"];
const HYDRANT_TYPES: [&str; 4] = ["Clow", "Eddy", "Mueller", "Traverse City"];
const LEAD_LABELS: [&str; 6] = ["Lead", "Galvanized", "Copper/Lead", "Lead/Copper", "Copper/Galvanized", "Galvanized/Copper"];
const SAFE_LABELS: [&str; 6] = ["Copper", "Copper", "Copper", "Plastic", "Copper/?", "Copper/Copper"];

struct Cluster {
    lat: f64,
    lon: f64,
    offset: f64,
    base_year: f64,
    log_land: f64,
}

fn pick<'a>(rng: &mut impl Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().expect("non-empty choices")
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    v.iter().map(|x| (x - mean) / sd).collect()
}

pub fn generate(config: &GeneratorConfig) -> Result<SyntheticCity> {
    config.validate()?;
    let mut rng = stream(config.seed, &[0]);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let clusters: Vec<Cluster> = (0..config.n_clusters)
        .map(|_| Cluster {
            lat: rng.random_range(42.99..43.06),
            lon: rng.random_range(-83.76..-83.62),
            offset: config.signals.cluster * normal.sample(&mut rng),
            base_year: rng.random_range(1915.0..1975.0),
            log_land: 8.8 + 0.5 * normal.sample(&mut rng),
        })
        .collect();

    let mut parcels = Vec::with_capacity(config.n_parcels);
    let mut lead_bearing = Vec::with_capacity(config.n_parcels);
    let mut log_land = Vec::with_capacity(config.n_parcels);
    let mut acres = Vec::with_capacity(config.n_parcels);
    let mut cluster_of = Vec::with_capacity(config.n_parcels);
    for i in 0..config.n_parcels {
        let c = rng.random_range(0..clusters.len());
        let cl = &clusters[c];
        let mut p = ParcelRecord::new(format!("41{c:02}{i:06}"));
        let (street, (suffix, _)) = (STREETS[c % STREETS.len()], SUFFIXES[c % SUFFIXES.len()]);
        p.address = Some(format!("{} {street} {suffix}", 100 + i));
        let lat = (cl.lat + config.cluster_spread * normal.sample(&mut rng)).clamp(42.96, 43.09);
        let lon = (cl.lon + config.cluster_spread * normal.sample(&mut rng)).clamp(-83.79, -83.59);
        p.latitude = Some((lat * 1e6).round() / 1e6);
        p.longitude = Some((lon * 1e6).round() / 1e6);
        let year = (cl.base_year + 12.0 * normal.sample(&mut rng)).round().clamp(1880.0, 2015.0);
        p.year_built = Some(year);
        let lead_prob = if year < 1940.0 {
            0.45
        } else if year < 1960.0 {
            0.2
        } else {
            0.03
        };
        let bearing = rng.random_bool(lead_prob);
        let mut label = if bearing { pick(&mut rng, &LEAD_LABELS) } else { pick(&mut rng, &SAFE_LABELS) };
        if rng.random_bool(config.label_noise) {
            label = if rng.random_bool(0.5) { "Unknown" } else { "" };
        }
        let split = split_sl_label(label);
        p.sl_type = Some(label.to_string());
        p.sl_type2 = Some(format!("{:?}", split.public_material));
        p.sl_lead = Some(
            match (split.private_material, split.public_material) {
                (Material::Lead, _) | (_, Material::Lead) => "Yes",
                (Material::Unknown, Material::Unknown) => "",
                _ => "No",
            }
            .to_string(),
        );
        let land = (cl.log_land + 0.4 * normal.sample(&mut rng)).exp().round();
        let building = (land * rng.random_range(2.0..6.0)).round();
        let a = ((0.08 + 0.04 * normal.sample(&mut rng).abs()) * 100.0).round() / 100.0;
        p.land_value = Some(land);
        p.land_improvements_value = Some((land * rng.random_range(0.0..0.2)).round());
        p.residential_building_value = Some(building);
        p.commercial_building_value = Some(if rng.random_bool(0.05) { (building * 2.0).round() } else { 0.0 });
        p.home_sev = Some(((land + building) / 2.0).round());
        p.parcel_acres = Some(a);
        p.building_storeys = Some(if rng.random_bool(0.7) { 1.0 } else { 2.0 });
        let homestead = rng.random_bool(0.6);
        p.homestead = Some(if homestead { "Yes" } else { "No" }.to_string());
        p.homestead_percent = Some(if homestead { 100.0 } else { 0.0 });
        p.zip = Some(ZIPS[c % ZIPS.len()].to_string());
        p.owner_type = Some(pick(&mut rng, &["Private", "Private", "Private", "Land Bank", "Public"]).to_string());
        p.use_type = Some(pick(&mut rng, &["Residential", "Residential", "Residential", "Vacant", "Commercial"]).to_string());
        p.prop_class = Some(pick(&mut rng, &["401", "401", "402", "201"]).to_string());
        p.old_prop_class = p.prop_class.clone();
        p.usps_vacancy = Some(pick(&mut rng, &["Occupied", "Occupied", "Occupied", "Vacant", ""]).to_string());
        p.zoning = Some(pick(&mut rng, &["R-1", "R-1", "R-2", "C-1"]).to_string());
        p.future_landuse =
            Some(pick(&mut rng, &["Traditional Neighborhood", "Green Neighborhood", "Commerce"]).to_string());
        p.draft_zone = Some(pick(&mut rng, &["SR-1", "SR-2", "MU"]).to_string());
        p.housing_condition_2012 = Some(pick(&mut rng, &["Good", "Fair", "Poor", ""]).to_string());
        p.housing_condition_2014 = Some(pick(&mut rng, &["Good", "Fair", "Poor", ""]).to_string());
        p.commercial_condition_2013 = Some(pick(&mut rng, &["", "", "", "Good", "Poor"]).to_string());
        p.rental = Some(pick(&mut rng, &["Yes", "No", "No"]).to_string());
        p.residential_building_style = Some(pick(&mut rng, &["Ranch", "Colonial", "Bungalow", "Other"]).to_string());
        p.ward = Some((c % 9 + 1).to_string());
        p.precinct = Some(format!("{}-{}", c % 9 + 1, rng.random_range(1..4)));
        p.centract = Some((100 + c * 3 + rng.random_range(0..3)) as f64);
        p.cenblock = Some(format!("{}{}", 1000 + c * 10, rng.random_range(0..5)));
        lead_bearing.push(bearing);
        log_land.push(land.ln());
        acres.push(a);
        cluster_of.push(c);
        parcels.push(p);
    }

    let zip = Poisson::new(config.tests_lambda).map_err(|e| Error::invalid(e.to_string()))?;
    let counts: Vec<usize> = (0..config.n_parcels)
        .map(|_| if rng.random_bool(config.p_zero) { 0 } else { zip.sample(&mut rng) as usize })
        .collect();

    let land_z = standardize(&log_land);
    let acres_z = standardize(&acres);
    let s = &config.signals;
    let scores: Vec<f64> = (0..config.n_parcels)
        .map(|i| {
            let year = parcels[i].year_built.expect("year set");
            let (lat, lon) = parcels[i].coords().expect("coordinates set");
            let d2 = ((lat - CORE.0).powi(2) + (lon - CORE.1).powi(2)) / (CORE_RADIUS * CORE_RADIUS);
            clusters[cluster_of[i]].offset
                + s.hotspot * (-0.5 * d2).exp()
                + s.year_built * 1.5 * ((1945.0 - year) / 10.0).tanh()
                + s.sl_material * f64::from(u8::from(lead_bearing[i])) * (0.5 + sigmoid((1945.0 - year) / 8.0))
                - s.land_value * land_z[i]
                + s.noise * acres_z[i]
        })
        .collect();
    let total_tests: usize = counts.iter().sum();
    let weights: Vec<f64> =
        if total_tests > 0 { counts.iter().map(|&c| c as f64).collect() } else { vec![1.0; config.n_parcels] };
    let intercept = solve_intercept(&scores, &weights, config.target_rate)?;

    let start = NaiveDate::from_ymd_opt(2015, 10, 1).expect("valid date");
    let mut truth = BTreeMap::new();
    let mut tests = Vec::with_capacity(total_tests);
    let mut expected = 0.0;
    for (i, p) in parcels.iter().enumerate() {
        let prob = sigmoid(intercept + scores[i]).clamp(1e-9, 1.0 - 1e-9);
        expected += weights[i] * prob;
        let log_mu = lead_log_mu(prob, config.lead_sigma);
        let c = cluster_of[i];
        let (street, (short, long)) = (STREETS[c % STREETS.len()], SUFFIXES[c % SUFFIXES.len()]);
        for _ in 0..counts[i] {
            let number = 100 + i;
            let address = match rng.random_range(0..4) {
                0 => format!("{number} {street} {short}"),
                1 => format!("{number} {} {}", street.to_uppercase(), long.to_uppercase()),
                2 => format!("{number} {street} {long}"),
                _ => format!("{number}  {}  {}", street.to_lowercase(), short.trim_end_matches('.').to_lowercase()),
            };
            let lead = draw_lead(log_mu, config.lead_sigma, &mut rng);
            let copper = rng.random_bool(0.9).then(|| ((4.0 + normal.sample(&mut rng)).exp() * 100.0).round() / 100.0);
            tests.push(LeadTest {
                sample_date: Some(start + Duration::days(rng.random_range(0..450))),
                lead_ppb: lead,
                copper_ppb: copper,
                address,
                pid: None,
            });
        }
        truth.insert(
            p.pid.clone(),
            ParcelTruth { probability: prob, log_mu, lead_bearing: lead_bearing[i], tests: counts[i] },
        );
    }

    let n_hydrants = (config.n_parcels / 8).max(1);
    let hydrants = (0..n_hydrants)
        .map(|h| {
            let c = rng.random_range(0..clusters.len());
            let cl = &clusters[c];
            let old = cl.base_year < 1945.0;
            let kind = if old && rng.random_bool(0.6) { HYDRANT_TYPES[3] } else { pick(&mut rng, &HYDRANT_TYPES) };
            HydrantRecord {
                hydrant_id: format!("H{h:05}"),
                hydrant_type: kind.to_string(),
                latitude: ((cl.lat + config.cluster_spread * normal.sample(&mut rng)) * 1e6).round() / 1e6,
                longitude: ((cl.lon + config.cluster_spread * normal.sample(&mut rng)) * 1e6).round() / 1e6,
            }
        })
        .collect();

    let service_lines = parcels
        .iter()
        .map(|p| {
            let raw = p.sl_type.clone().unwrap_or_default();
            let split = split_sl_label(&raw);
            ServiceLineRecord {
                pid: p.pid.clone(),
                raw_label: raw,
                private_material: split.private_material,
                public_material: split.public_material,
                single_token: split.single_token,
            }
        })
        .collect();

    let weight_total: f64 = weights.iter().sum();
    Ok(SyntheticCity {
        parcels,
        tests,
        service_lines,
        hydrants,
        truth: GroundTruth {
            intercept,
            lead_sigma: config.lead_sigma,
            target_rate: config.target_rate,
            expected_rate: expected / weight_total,
            parcels: truth,
        },
    })
}

impl SyntheticCity {
    /// Writes the five generator files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        write_parcels(&self.parcels, open(PARCELS_FILE)?)?;
        write_tests(&self.tests, open(TESTS_FILE)?)?;
        write_service_lines(&self.service_lines, open(SERVICE_LINES_FILE)?)?;
        write_hydrants(&self.hydrants, open(HYDRANTS_FILE)?)?;
        let mut w = open(GROUND_TRUTH_FILE)?;
        serde_json::to_writer_pretty(&mut w, &self.truth)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }
}

/// AUC of the true probabilities against realized labels; rows are mapped to
/// parcels through their group keys.
pub fn bayes_auc(truth: &GroundTruth, groups: &[String], labels: &[u8]) -> Result<f64> {
    let p = groups
        .iter()
        .map(|g| truth.probability(g).ok_or_else(|| Error::invalid(format!("no ground truth for `{g}`"))))
        .collect::<Result<Vec<f64>>>()?;
    auc(&p, labels)
}

/// A small labeled dataset with one informative numeric feature, some pure
/// noise features and optionally a constant one. One row per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    pub n_rows: usize,
    /// Logit slope on the standard-normal signal feature.
    pub strength: f64,
    pub intercept: f64,
    pub n_noise: usize,
    pub constant: bool,
    pub seed: u64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self { n_rows: 600, strength: 2.0, intercept: -1.0, n_noise: 3, constant: false, seed: 0 }
    }
}

pub const SIGNAL_FEATURE: &str = "signal";

/// Returns the dataset and each row's true probability.
pub fn signal_dataset(config: &SignalConfig) -> Result<(Dataset, Vec<f64>)> {
    let mut names = vec![SIGNAL_FEATURE.to_string()];
    names.extend((1..=config.n_noise).map(|i| format!("noise_{i}")));
    if config.constant {
        names.push("constant".to_string());
    }
    let schema = FeatureSchema::new(names.iter().map(FeatureDef::numeric).collect())?;
    let d = names.len();
    let mut rng = stream(config.seed, &[1]);
    let mut data = Vec::with_capacity(config.n_rows * d);
    let mut labels = Vec::with_capacity(config.n_rows);
    let mut probs = Vec::with_capacity(config.n_rows);
    for _ in 0..config.n_rows {
        let x: f64 = rng.sample(rand_distr::StandardNormal);
        data.push(x);
        for _ in 0..config.n_noise {
            data.push(rng.sample(rand_distr::StandardNormal));
        }
        if config.constant {
            data.push(1.0);
        }
        let p = sigmoid(config.intercept + config.strength * x);
        labels.push(u8::from(rng.random_bool(p)));
        probs.push(p);
    }
    let groups = (0..config.n_rows).map(|i| format!("r{i:06}")).collect();
    let ds = Dataset::new(schema, Matrix::new(config.n_rows, d, data)?, labels, groups)?;
    Ok((ds, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig { n_parcels: 400, seed, ..GeneratorConfig::default() }
    }

    #[test]
    fn zero_signals_give_constant_probability() {
        let city = generate(&GeneratorConfig { signals: Signals::zero(), ..small(1) }).unwrap();
        for t in city.truth.parcels.values() {
            assert!((t.probability - 0.083).abs() < 1e-9);
        }
    }

    #[test]
    fn intercept_hits_target() {
        let city = generate(&small(2)).unwrap();
        assert!((city.truth.expected_rate - 0.083).abs() < 1e-6);
    }

    #[test]
    fn saturated_signals_are_unsatisfiable() {
        assert!(solve_intercept(&[-1e6, 1e6], &[1.0, 1.0], 0.2).is_err());
        assert!(solve_intercept(&[0.0, 0.0], &[1.0, 1.0], 0.2).is_ok());
    }

    #[test]
    fn exceedance_matches_probability() {
        let mut rng = stream(3, &[]);
        for p in [0.02, 0.083, 0.4] {
            let mu = lead_log_mu(p, 1.2);
            let hits = (0..20_000).filter(|_| draw_lead(mu, 1.2, &mut rng) > ACTION_LEVEL_PPB).count();
            assert!((hits as f64 / 20_000.0 - p).abs() < 0.01, "p = {p}");
        }
    }

    #[test]
    fn same_seed_same_city() {
        assert_eq!(generate(&small(4)).unwrap(), generate(&small(4)).unwrap());
        assert_ne!(generate(&small(4)).unwrap().tests, generate(&small(5)).unwrap().tests);
    }

    #[test]
    fn bayes_auc_two_values() {
        let mut parcels = BTreeMap::new();
        for (pid, p) in [("a", 0.01), ("b", 0.9)] {
            parcels.insert(pid.to_string(), ParcelTruth { probability: p, log_mu: 0.0, lead_bearing: false, tests: 1 });
        }
        let truth = GroundTruth { intercept: 0.0, lead_sigma: 1.0, target_rate: 0.1, expected_rate: 0.1, parcels };
        let groups: Vec<String> = ["a", "a", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        let labels = [0, 1, 1, 1, 0];
        // Positives: a, b, b; negatives: a, b. Pairs (pos, neg):
        // a-a 0.5, a-b 0, b-a 1, b-b 0.5, b-a 1, b-b 0.5 → 3.5 / 6.
        assert!((bayes_auc(&truth, &groups, &labels).unwrap() - 3.5 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn signal_dataset_shape() {
        let (ds, p) = signal_dataset(&SignalConfig { constant: true, ..SignalConfig::default() }).unwrap();
        assert_eq!(ds.schema.len(), 5);
        assert_eq!(ds.len(), 600);
        assert_eq!(p.len(), 600);
        assert!(ds.rows.column(4).iter().all(|&v| v == 1.0));
    }
}
