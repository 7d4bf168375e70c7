//! Markdown summary of a results directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::commands::read_model;
use crate::error::{CliError, CliResult};
use crate::files;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> CliResult<Table> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let header = rdr.headers()?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()?;
    Ok(Table { header, rows })
}

/// Four decimals for numeric cells, other cells verbatim.
fn cell(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) if s.contains('.') || s.contains('e') => format!("{v:.4}"),
        _ => s.to_string(),
    }
}

fn markdown(md: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(md, "| {} |", header.join(" | "));
    let _ = writeln!(md, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(md, "| {} |", r.join(" | "));
    }
    md.push('\n');
}

fn column(t: &Table, name: &str) -> Option<usize> {
    t.header.iter().position(|h| h == name)
}

fn pick(t: &Table, names: &[&str]) -> Vec<Vec<String>> {
    let idx: Vec<Option<usize>> = names.iter().map(|n| column(t, n)).collect();
    t.rows
        .iter()
        .map(|r| idx.iter().map(|i| i.and_then(|i| r.get(i)).map(|s| cell(s)).unwrap_or_default()).collect())
        .collect()
}

/// Files listed in the report's closing section, in this order.
const POINTERS: [(&str, &str); 14] = [
    (files::MODEL, "serialized stacked model"),
    (files::CV_METRICS, "per-fold log loss and AUC"),
    (files::CV_SUMMARY, "pooled AUC and log loss per classifier"),
    (files::ROC, "ensemble ROC curve"),
    (files::CALIBRATION, "ensemble calibration bins"),
    (files::OOF, "out-of-fold predictions"),
    (files::GRID, "hyperparameter grid scores"),
    (files::IMPORTANCE, "drop-one feature importance"),
    (files::LEARNING_CURVE, "learning curve"),
    (files::HEATMAP, "test locations and lead values"),
    (files::LEAD_BY_SL_TYPE, "mean log lead by service-line record"),
    (files::LEAD_BY_DECADE, "mean log lead by decade built"),
    (files::SL_TYPE_BY_YEAR, "service-line record against year built"),
    (files::RISK_GEOJSON, "parcels above the risk threshold"),
];

/// Writes `report.md` into `dir`. Fails with the list of missing files when a
/// required input is absent.
pub fn cmd_report(dir: &Path) -> CliResult<PathBuf> {
    let missing: Vec<&str> = files::REPORT_REQUIRED.iter().copied().filter(|f| !dir.join(f).is_file()).collect();
    if !missing.is_empty() {
        return Err(CliError::missing(format!("{}: missing {}", dir.display(), missing.join(", "))));
    }
    let model = read_model(&dir.join(files::MODEL))?;
    let mut md = String::from("# Lead risk report\n\n");

    md += "## Model\n\n";
    let _ = writeln!(md, "- folds: {}", model.folds);
    let _ = writeln!(md, "- seed: {}", model.seed);
    let _ = writeln!(md, "- features: {} (schema {})", model.schema.len(), model.schema_hash);
    let _ = writeln!(md, "- first layer: {}", model.specs.iter().map(|s| s.label()).collect::<Vec<_>>().join(", "));
    let _ = writeln!(md, "- meta learner: {}", model.meta_spec.label());
    md.push('\n');

    md += "## Cross-validated performance\n\n";
    let summary = read_table(&dir.join(files::CV_SUMMARY))?;
    let rows: Vec<Vec<String>> = pick(&summary, &["classifier", "auc", "logloss_mean", "logloss_sd"])
        .into_iter()
        .map(|r| vec![r[0].clone(), r[1].clone(), format!("{} ± {}", r[2], r[3])])
        .collect();
    markdown(&mut md, &["classifier", "AUC", "log loss"], &rows);

    md += "## Calibration of the ensemble\n\n";
    let cal = read_table(&dir.join(files::CALIBRATION))?;
    let rows: Vec<Vec<String>> = pick(&cal, &["lower", "upper", "count", "mean_predicted", "fraction_positive", "ci_low", "ci_high"])
        .into_iter()
        .map(|r| {
            let ci = if r[5].is_empty() { String::new() } else { format!("[{}, {}]", r[5], r[6]) };
            vec![format!("[{}, {})", r[0], r[1]), r[2].clone(), r[3].clone(), r[4].clone(), ci]
        })
        .collect();
    markdown(&mut md, &["bin", "count", "mean predicted", "fraction positive", "bootstrap CI"], &rows);

    let roc = read_table(&dir.join(files::ROC))?;
    let _ = writeln!(md, "ROC curve: {} points in `{}`.\n", roc.rows.len(), files::ROC);

    if dir.join(files::IMPORTANCE).is_file() {
        md += "## Feature importance\n\n";
        let t = read_table(&dir.join(files::IMPORTANCE))?;
        let rows: Vec<Vec<String>> = pick(&t, &["rank", "feature", "auc_drop"]).into_iter().take(10).collect();
        markdown(&mut md, &["rank", "feature", "AUC drop"], &rows);
    }

    if dir.join(files::LEARNING_CURVE).is_file() {
        md += "## Learning curve\n\n";
        let t = read_table(&dir.join(files::LEARNING_CURVE))?;
        markdown(&mut md, &["training size", "mean AUC", "sd", "replicates"], &pick(&t, &["size", "mean_auc", "sd_auc", "replicates"]));
    }

    for (file, title) in [(files::LEAD_BY_SL_TYPE, "Lead by service-line record"), (files::LEAD_BY_DECADE, "Lead by decade built")] {
        if dir.join(file).is_file() {
            let _ = writeln!(md, "## {title}\n");
            let t = read_table(&dir.join(file))?;
            markdown(&mut md, &["group", "tests", "mean log(1 + lead)", "CI low", "CI high"], &pick(&t, &["key", "n", "mean_log_lead", "ci_low", "ci_high"]));
        }
    }

    if dir.join(files::RISK_CSV).is_file() {
        md += "## Risk map\n\n";
        let t = read_table(&dir.join(files::RISK_CSV))?;
        let _ = writeln!(md, "{} parcels scored in `{}`.", t.rows.len(), files::RISK_CSV);
        if let Ok(text) = fs::read_to_string(dir.join(files::RISK_GEOJSON)) {
            let geo: serde_json::Value = serde_json::from_str(&text)?;
            let n = geo["features"].as_array().map_or(0, Vec::len);
            let _ = writeln!(md, "{n} parcels above the threshold in `{}`.", files::RISK_GEOJSON);
        }
        md.push('\n');
    }

    md += "## Files\n\n";
    for (file, what) in POINTERS {
        if dir.join(file).is_file() {
            let _ = writeln!(md, "- `{file}`: {what}");
        }
    }

    let path = dir.join(files::REPORT);
    fs::write(&path, md).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(path)
}
