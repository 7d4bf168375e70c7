//! Fixed output file names under the `--out` directory.

pub const MODEL: &str = "model.json";
pub const CV_METRICS: &str = "cv_metrics.csv";
pub const CV_SUMMARY: &str = "cv_summary.csv";
pub const ROC: &str = "roc.csv";
pub const CALIBRATION: &str = "calibration.csv";
pub const OOF: &str = "oof_predictions.csv";
pub const GRID: &str = "grid_search.csv";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const SCHEMA: &str = "schema.json";
pub const HEATMAP: &str = "test_heatmap.csv";
pub const LEAD_BY_SL_TYPE: &str = "lead_by_sl_type.csv";
pub const LEAD_BY_DECADE: &str = "lead_by_decade.csv";
pub const SL_TYPE_BY_YEAR: &str = "sl_type_by_year.csv";
pub const SL_CONFUSION: &str = "sl_confusion.csv";
pub const LEARNING_CURVE: &str = "learning_curve.csv";
pub const IMPORTANCE: &str = "importance.csv";
pub const RISK_CSV: &str = "risk.csv";
pub const RISK_GEOJSON: &str = "risk.geojson";
pub const REPORT: &str = "report.md";

/// Files `report` cannot do without.
pub const REPORT_REQUIRED: [&str; 5] = [MODEL, CV_SUMMARY, CV_METRICS, ROC, CALIBRATION];
