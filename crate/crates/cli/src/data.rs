//! Loading the four input files (or a generated city) into a dataset.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use leadrisk::features::{assemble_dataset, build_schema};
use leadrisk::ingest::{
    assign_hydrant_types, match_tests_to_parcels, parse_hydrants, parse_inspections, parse_parcels, parse_service_lines,
    parse_tests, split_sl_label, write_hydrants, write_parcels, write_service_lines, write_tests, InspectionRecord,
    LeadTest, ParcelRecord, ParseReport, ServiceLineRecord,
};
use leadrisk::synth::{generate, GroundTruth};
use leadrisk::Dataset;
use serde::Serialize;

use crate::config::{DataSource, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub files: BTreeMap<String, ParseReport>,
    pub unrecognized_sl_tokens: usize,
    pub tests_matched: usize,
    pub tests_unmatched: usize,
    pub tests_ambiguous: usize,
    pub rows_excluded: usize,
    pub dataset_rows: usize,
    pub positive_rows: usize,
    pub distinct_parcels: usize,
    pub features: usize,
}

pub struct Inputs {
    pub parcels: Vec<ParcelRecord>,
    /// Tests matched to a parcel.
    pub tests: Vec<LeadTest>,
    pub records: Vec<ServiceLineRecord>,
    pub inspections: Option<Vec<InspectionRecord>>,
    pub data: Dataset,
    pub summary: IngestSummary,
    pub truth: Option<GroundTruth>,
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn in_file<T>(path: &Path, r: leadrisk::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

/// Raw records before matching.
struct Raw {
    parcels: (Vec<ParcelRecord>, ParseReport),
    tests: (Vec<LeadTest>, ParseReport),
    records: Option<(Vec<ServiceLineRecord>, ParseReport, usize)>,
    hydrants: Option<(Vec<leadrisk::ingest::HydrantRecord>, ParseReport)>,
    inspections: Option<(Vec<InspectionRecord>, ParseReport)>,
    truth: Option<GroundTruth>,
}

fn read_files(cfg: &RunConfig) -> CliResult<Raw> {
    let DataSource::Files(files) = &cfg.data else { unreachable!("called for file inputs") };
    let parcels = in_file(&files.parcels, parse_parcels(open(&files.parcels)?, &Default::default()))?;
    let tests = in_file(&files.tests, parse_tests(open(&files.tests)?))?;
    let records = match &files.service_lines {
        Some(p) => Some(in_file(p, parse_service_lines(open(p)?))?),
        None => None,
    };
    let hydrants = match &files.hydrants {
        Some(p) => Some(in_file(p, parse_hydrants(open(p)?))?),
        None => None,
    };
    let inspections = match &files.inspections {
        Some(p) => Some(in_file(p, parse_inspections(open(p)?))?),
        None => None,
    };
    Ok(Raw { parcels, tests, records, hydrants, inspections, truth: None })
}

/// A generated city, passed through the same writers and parsers as files.
fn read_synthetic(cfg: &RunConfig) -> CliResult<Raw> {
    let city = generate(&cfg.synth)?;
    let mut buf = Vec::new();
    write_parcels(&city.parcels, &mut buf)?;
    let parcels = parse_parcels(buf.as_slice(), &Default::default())?;
    buf.clear();
    write_tests(&city.tests, &mut buf)?;
    let tests = parse_tests(buf.as_slice())?;
    buf.clear();
    write_service_lines(&city.service_lines, &mut buf)?;
    let records = parse_service_lines(buf.as_slice())?;
    buf.clear();
    write_hydrants(&city.hydrants, &mut buf)?;
    let hydrants = parse_hydrants(buf.as_slice())?;
    Ok(Raw {
        parcels,
        tests,
        records: Some(records),
        hydrants: Some(hydrants),
        inspections: None,
        truth: Some(city.truth),
    })
}

/// Service-line records taken from the parcel file when no separate file is given.
fn records_from_parcels(parcels: &[ParcelRecord]) -> Vec<ServiceLineRecord> {
    parcels
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
        .collect()
}

/// Parcels only, with hydrant types filled in; used for scoring.
pub fn load_parcels(cfg: &RunConfig) -> CliResult<Vec<ParcelRecord>> {
    let raw = match cfg.data {
        DataSource::Files(_) => read_files(cfg)?,
        DataSource::Synthetic => read_synthetic(cfg)?,
    };
    let mut parcels = raw.parcels.0;
    if let Some((hydrants, _)) = &raw.hydrants {
        assign_hydrant_types(&mut parcels, hydrants)?;
    }
    Ok(parcels)
}

pub fn load_inputs(cfg: &RunConfig) -> CliResult<Inputs> {
    let raw = match cfg.data {
        DataSource::Files(_) => read_files(cfg)?,
        DataSource::Synthetic => read_synthetic(cfg)?,
    };
    let mut files = BTreeMap::new();
    let (mut parcels, parcel_report) = raw.parcels;
    files.insert("parcels".to_string(), parcel_report);
    if let Some((hydrants, report)) = raw.hydrants {
        assign_hydrant_types(&mut parcels, &hydrants)?;
        files.insert("hydrants".to_string(), report);
    }
    let (tests, test_report) = raw.tests;
    files.insert("tests".to_string(), test_report);
    let (records, unrecognized) = match raw.records {
        Some((records, report, unrecognized)) => {
            files.insert("service_lines".to_string(), report);
            (records, unrecognized)
        }
        None => (records_from_parcels(&parcels), 0),
    };
    let inspections = raw.inspections.map(|(list, report)| {
        files.insert("inspections".to_string(), report);
        list
    });

    let matched = match_tests_to_parcels(&tests, &parcels);
    let schema = build_schema(&parcels);
    let (data, excluded) = assemble_dataset(&matched.matched, &parcels, &schema)?;
    if data.is_empty() {
        return Err(CliError::data("no lead tests could be matched to parcels"));
    }
    let summary = IngestSummary {
        files,
        unrecognized_sl_tokens: unrecognized,
        tests_matched: matched.matched.len(),
        tests_unmatched: matched.discarded_unmatched,
        tests_ambiguous: matched.discarded_ambiguous,
        rows_excluded: excluded,
        dataset_rows: data.len(),
        positive_rows: data.n_positive(),
        distinct_parcels: data.distinct_groups(),
        features: data.schema.len(),
    };
    Ok(Inputs { parcels, tests: matched.matched, records, inspections, data, summary, truth: raw.truth })
}
