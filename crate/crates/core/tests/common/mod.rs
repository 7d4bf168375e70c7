#![allow(dead_code)]

use leadrisk::features::{assemble_dataset, build_schema, Dataset};
use leadrisk::ingest::{
    assign_hydrant_types, match_tests_to_parcels, parse_hydrants, parse_parcels, parse_service_lines, parse_tests,
    write_hydrants, write_parcels, write_service_lines, write_tests, LeadTest, ParcelRecord, ServiceLineRecord,
};
use leadrisk::synth::{generate, GeneratorConfig, SyntheticCity};

/// A generated city pushed through the CSV writers and parsers.
pub struct Loaded {
    pub city: SyntheticCity,
    pub parcels: Vec<ParcelRecord>,
    pub tests: Vec<LeadTest>,
    pub records: Vec<ServiceLineRecord>,
    pub data: Dataset,
    pub rejected: usize,
    pub unmatched: usize,
}

pub fn load(config: &GeneratorConfig) -> Loaded {
    let city = generate(config).unwrap();
    let mut buf = Vec::new();
    write_parcels(&city.parcels, &mut buf).unwrap();
    let (mut parcels, parcel_report) = parse_parcels(buf.as_slice(), &Default::default()).unwrap();

    let mut buf = Vec::new();
    write_hydrants(&city.hydrants, &mut buf).unwrap();
    let (hydrants, hydrant_report) = parse_hydrants(buf.as_slice()).unwrap();
    assign_hydrant_types(&mut parcels, &hydrants).unwrap();

    let mut buf = Vec::new();
    write_service_lines(&city.service_lines, &mut buf).unwrap();
    let (records, sl_report, _) = parse_service_lines(buf.as_slice()).unwrap();

    let mut buf = Vec::new();
    write_tests(&city.tests, &mut buf).unwrap();
    let (tests, test_report) = parse_tests(buf.as_slice()).unwrap();

    let matched = match_tests_to_parcels(&tests, &parcels);
    let schema = build_schema(&parcels);
    let (data, excluded) = assemble_dataset(&matched.matched, &parcels, &schema).unwrap();
    let unmatched = matched.discarded();
    let rejected = parcel_report.rows_rejected
        + hydrant_report.rows_rejected
        + sl_report.rows_rejected
        + test_report.rows_rejected
        + excluded;
    Loaded {
        city,
        parcels,
        tests: matched.matched,
        records,
        data,
        rejected,
        unmatched,
    }
}
