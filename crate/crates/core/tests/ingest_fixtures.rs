use std::collections::BTreeMap;

use leadrisk::features::build_schema;
use leadrisk::ingest::{
    nearest_hydrant, parse_inspections, parse_parcels, parse_service_lines, parse_tests, sl_confusion_matrix,
    write_parcels, write_tests, HydrantRecord, LeadTest, ParcelRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SL_RECORD_COUNTS: [(&str, usize); 8] = [
    ("Copper", 25843),
    ("Unkown/Other", 13090),
    ("Galvanized/Other", 12261),
    ("Copper/Lead", 4161),
    ("Copper/?", 149),
    ("Tubeloy", 118),
    ("Lead", 111),
    ("Lead/Tubeloy", 59),
];

const INSPECTED: [(&str, [u64; 3]); 6] = [
    ("Copper", [1535, 38, 13]),
    ("Copper/Lead", [685, 58, 40]),
    ("Galvanized/Other", [177, 237, 4]),
    ("Lead", [7, 4, 24]),
    ("Tubeloy", [28, 1, 2]),
    ("Unkown/Other", [302, 279, 40]),
];

#[test]
fn record_label_distribution_survives_parcel_parsing() {
    let mut parcels = Vec::new();
    for (label, n) in SL_RECORD_COUNTS {
        for _ in 0..n {
            let mut p = ParcelRecord::new(format!("{:010}", parcels.len()));
            p.sl_type = Some(label.to_string());
            parcels.push(p);
        }
    }
    let mut buf = Vec::new();
    write_parcels(&parcels, &mut buf).unwrap();
    let (parsed, report) = parse_parcels(buf.as_slice(), &Default::default()).unwrap();
    assert_eq!(report.rows_rejected, 0);

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in &parsed {
        *counts.entry(p.sl_type.clone().unwrap()).or_default() += 1;
    }
    assert_eq!(counts["Copper"], 25843);
    for (label, n) in SL_RECORD_COUNTS {
        assert_eq!(counts[label], n, "{label}");
    }
    assert_eq!(parsed.len(), 55792);
}

#[test]
fn confusion_table_fixture_reproduces_every_cell() {
    let mut records = String::from("pid,sl_type\n");
    let mut inspections = String::from("pid,private_material_inspected\n");
    let mut pid = 0;
    for (label, row) in INSPECTED {
        for (material, n) in ["Copper", "Galvanized", "Lead"].iter().zip(row) {
            for _ in 0..n {
                records += &format!("P{pid},{label}\n");
                inspections += &format!("P{pid},{material}\n");
                pid += 1;
            }
        }
    }
    // parcels with a record but no inspection, and the reverse, must not count
    records += "X1,Copper\nX2,Lead\n";
    inspections += "Y1,Lead\n";

    let (records, _, _) = parse_service_lines(records.as_bytes()).unwrap();
    let (inspections, _) = parse_inspections(inspections.as_bytes()).unwrap();
    let table = sl_confusion_matrix(&records, &inspections).unwrap();

    assert_eq!(table.get("Copper", "Copper"), 1535);
    assert_eq!(table.get("Copper", "Lead"), 13);
    assert_eq!(table.get("Lead", "Lead"), 24);
    let mut cells = 0;
    for (label, row) in INSPECTED {
        for (material, n) in ["Copper", "Galvanized", "Lead"].iter().zip(row) {
            assert_eq!(table.get(label, material), n, "{label} / {material}");
            cells += 1;
        }
    }
    assert_eq!(cells, 18);
    assert_eq!(table.row_labels.len(), 6);
    assert_eq!(table.total(), 3474);
}

#[test]
fn full_column_fixture_gives_thirty_five_features() {
    let mut p = ParcelRecord::new("4101000001");
    p.year_built = Some(1931.0);
    p.zip = Some("48503".into());
    let schema = build_schema(&[p]);
    assert_eq!(schema.len(), 35);
}

#[test]
fn large_test_file_keeps_every_row() {
    let tests: Vec<LeadTest> = (0..15447)
        .map(|i| LeadTest {
            sample_date: None,
            lead_ppb: (i % 97) as f64 * 0.5,
            copper_ppb: None,
            address: format!("{} Saginaw St", i % 7999),
            pid: None,
        })
        .collect();
    let mut buf = Vec::new();
    write_tests(&tests, &mut buf).unwrap();
    let (parsed, report) = parse_tests(buf.as_slice()).unwrap();
    assert_eq!(parsed.len(), 15447);
    assert_eq!(report.rows_rejected, 0);
    assert_eq!(parsed[15446].lead_ppb, tests[15446].lead_ppb);
}

fn great_circle(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dl = (b.1 - a.1).to_radians();
    let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    c.clamp(-1.0, 1.0).acos()
}

#[test]
fn nearest_hydrant_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let hydrants: Vec<HydrantRecord> = (0..100)
        .map(|i| HydrantRecord {
            hydrant_id: format!("H{i:03}"),
            hydrant_type: format!("T{}", i),
            latitude: 43.0 + (i / 10) as f64 * 0.005,
            longitude: -83.7 + (i % 10) as f64 * 0.005,
        })
        .collect();
    for _ in 0..200 {
        let q = (rng.random_range(42.99..43.06), rng.random_range(-83.71..-83.64));
        let best = hydrants
            .iter()
            .min_by(|a, b| {
                let da = great_circle(q, (a.latitude, a.longitude));
                let db = great_circle(q, (b.latitude, b.longitude));
                da.total_cmp(&db).then(a.hydrant_id.cmp(&b.hydrant_id))
            })
            .unwrap();
        assert_eq!(nearest_hydrant(Some(q), &hydrants).unwrap(), best.hydrant_type);
    }
}
