use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use leadrisk::analysis::{
    mean_log_lead_by_decade, mean_log_lead_by_sl_type, risk_map, sl_type_year_points, test_heatmap_export,
    write_group_summaries, write_year_points,
};
use leadrisk::features::build_schema;
use leadrisk::ingest::sl_confusion_matrix;
use leadrisk::learners::{ClassifierSpec, LearnerKind};
use leadrisk::metrics::{calibration_curve, drop_one_importance, learning_curve, roc_points, write_learning_curve_csv};
use leadrisk::pipeline::{grouped_kfold, run_stack, select_hyperparams, CvResult, StackedModel, ENSEMBLE};
use leadrisk::synth::generate;
use log::info;

use crate::config::{RunConfig, DECADE_RANGE};
use crate::data::{load_inputs, load_parcels};
use crate::error::{CliError, CliResult};
use crate::files;

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn finish(mut w: BufWriter<File>) -> CliResult<()> {
    w.flush()?;
    Ok(())
}

/// Writes the five generator files.
pub fn cmd_synth(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let city = generate(&cfg.synth)?;
    city.write_to(&cfg.out)?;
    info!("generated {} parcels and {} tests", city.parcels.len(), city.tests.len());
    Ok([
        leadrisk::synth::PARCELS_FILE,
        leadrisk::synth::TESTS_FILE,
        leadrisk::synth::SERVICE_LINES_FILE,
        leadrisk::synth::HYDRANTS_FILE,
        leadrisk::synth::GROUND_TRUTH_FILE,
    ]
    .iter()
    .map(|f| cfg.out.join(f))
    .collect())
}

/// Parse reports, schema and the descriptive tables.
pub fn cmd_ingest(cfg: &RunConfig) -> CliResult<String> {
    let inputs = load_inputs(cfg)?;
    let out = &cfg.out;

    let mut w = create(out, files::INGEST_REPORT)?;
    serde_json::to_writer_pretty(&mut w, &inputs.summary)?;
    w.write_all(b"\n")?;
    finish(w)?;

    let mut w = create(out, files::SCHEMA)?;
    w.write_all(inputs.data.schema.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    finish(w)?;

    test_heatmap_export(&inputs.tests, &inputs.parcels, create(out, files::HEATMAP)?)?;
    let by_type = mean_log_lead_by_sl_type(&inputs.tests, &inputs.records, cfg.bootstrap, cfg.seed)?;
    write_group_summaries(&by_type, create(out, files::LEAD_BY_SL_TYPE)?)?;
    let (first, last) = DECADE_RANGE;
    let by_decade = mean_log_lead_by_decade(&inputs.tests, &inputs.parcels, first, last, cfg.bootstrap, cfg.seed)?;
    write_group_summaries(&by_decade, create(out, files::LEAD_BY_DECADE)?)?;
    write_year_points(&sl_type_year_points(&inputs.parcels), create(out, files::SL_TYPE_BY_YEAR)?)?;
    if let Some(inspections) = &inputs.inspections {
        let table = sl_confusion_matrix(&inputs.records, inspections)?;
        let mut w = create(out, files::SL_CONFUSION)?;
        w.write_all(table.to_csv()?.as_bytes())?;
        finish(w)?;
    }
    let s = &inputs.summary;
    Ok(format!(
        "{} rows from {} parcels ({} positive); {} tests unmatched, {} ambiguous",
        s.dataset_rows, s.distinct_parcels, s.positive_rows, s.tests_unmatched, s.tests_ambiguous
    ))
}

fn write_cv_summary(cv: &CvResult, out: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(out, files::CV_SUMMARY)?);
    w.write_record(["classifier", "auc", "logloss_mean", "logloss_sd", "mean_fold_auc"])?;
    for s in &cv.summary {
        w.write_record([
            s.spec.clone(),
            s.pooled_auc.to_string(),
            s.logloss_mean.to_string(),
            s.logloss_sd.to_string(),
            s.mean_fold_auc.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text table of AUC and log loss per classifier.
pub fn summary_table(cv: &CvResult) -> String {
    let width = cv.summary.iter().map(|s| s.spec.len()).max().unwrap_or(10).max(10);
    let mut t = format!("{:<width$}  {:>7}  {:>17}\n", "classifier", "AUC", "logloss");
    for s in &cv.summary {
        t += &format!(
            "{:<width$}  {:>7.4}  {:>8.4} ± {:<6.4}\n",
            s.spec, s.pooled_auc, s.logloss_mean, s.logloss_sd
        );
    }
    t
}

fn grid_is_trivial(grid: &[ClassifierSpec]) -> bool {
    LearnerKind::ALL.iter().all(|k| grid.iter().filter(|s| s.kind == *k).count() <= 1)
}

/// Grid search, out-of-fold stacking, metrics and the deployable model.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<String> {
    let inputs = load_inputs(cfg)?;
    let data = &inputs.data;
    let plan = grouped_kfold(&data.groups, cfg.folds, cfg.seed)?;
    let out = &cfg.out;

    let specs: Vec<ClassifierSpec> = if grid_is_trivial(&cfg.grid) {
        cfg.grid.clone()
    } else {
        let selections = select_hyperparams(&cfg.grid, data, &plan, cfg.seed)?;
        let mut w = csv::Writer::from_writer(create(out, files::GRID)?);
        w.write_record(["learner", "spec", "mean_logloss", "selected"])?;
        for s in &selections {
            for g in &s.scores {
                w.write_record([
                    s.kind.name().to_string(),
                    g.spec.label(),
                    g.mean_logloss.to_string(),
                    (g.spec == s.best).to_string(),
                ])?;
            }
        }
        w.flush()?;
        selections.into_iter().map(|s| s.best).collect()
    };
    info!("training {} first-layer learners on {} rows", specs.len(), data.len());

    let run = run_stack(data, &specs, &cfg.meta, &plan, cfg.seed)?;
    if run.ensemble_oof.len() != data.len() || run.oof.values.n_rows() != data.len() {
        return Err(CliError::internal("out-of-fold matrix does not cover every row"));
    }

    let mut w = create(out, files::MODEL)?;
    w.write_all(run.model.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    finish(w)?;

    run.cv.write_csv(create(out, files::CV_METRICS)?)?;
    write_cv_summary(&run.cv, out)?;
    roc_points(&run.ensemble_oof, &data.labels)?.write_csv(create(out, files::ROC)?)?;
    calibration_curve(&run.ensemble_oof, &data.labels, cfg.bins, cfg.bootstrap, cfg.seed)?
        .write_csv(create(out, files::CALIBRATION)?)?;

    let mut w = csv::Writer::from_writer(create(out, files::OOF)?);
    let mut header = vec!["row".to_string(), "pid".to_string(), "label".to_string()];
    header.extend(run.oof.specs.iter().cloned());
    header.push(ENSEMBLE.to_string());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec = vec![i.to_string(), data.groups[i].clone(), data.labels[i].to_string()];
        rec.extend(run.oof.values.row(i).iter().map(|v| v.to_string()));
        rec.push(run.ensemble_oof[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;

    Ok(summary_table(&run.cv))
}

/// Learning curve of the configured learner.
pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<String> {
    let inputs = load_inputs(cfg)?;
    let e = &cfg.evaluate;
    let points = learning_curve(&e.learner, &inputs.data, &e.sizes, e.replicates, e.validation_fraction, cfg.seed)?;
    write_learning_curve_csv(&points, create(&cfg.out, files::LEARNING_CURVE)?)?;
    let mut t = format!("learning curve for {}\n", e.learner.label());
    for p in &points {
        t += &format!("{:>7}  {:.4} ± {:.4}\n", p.size, p.mean_auc, p.sd_auc);
    }
    Ok(t)
}

/// Reads a saved model; a missing file is a missing artifact, anything
/// unreadable is a compatibility failure.
pub fn read_model(path: &Path) -> CliResult<StackedModel> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::missing(format!("model file {} not found", path.display())))
        }
        Err(e) => return Err(CliError::model(format!("{}: {e}", path.display()))),
    };
    StackedModel::from_json(&text).map_err(|e| CliError::model(format!("{}: {e}", path.display())))
}

/// Scores every parcel; full table as CSV, above-threshold parcels as GeoJSON.
pub fn cmd_predict(cfg: &RunConfig, model_path: Option<&Path>) -> CliResult<String> {
    let path = model_path.map(Path::to_path_buf).unwrap_or_else(|| cfg.model_path());
    let model = read_model(&path)?;
    let parcels = load_parcels(cfg)?;
    let hash = build_schema(&parcels).hash();
    if hash != model.schema_hash {
        return Err(CliError::model(format!(
            "parcel schema {hash} does not match the model's schema {}",
            model.schema_hash
        )));
    }
    let map = risk_map(&model, &parcels, cfg.threshold)?;
    map.write_csv(create(&cfg.out, files::RISK_CSV)?)?;
    let mut w = create(&cfg.out, files::RISK_GEOJSON)?;
    map.write_geojson(&mut w)?;
    finish(w)?;
    Ok(format!(
        "{} parcels scored; {} above {} mapped, {} above threshold without coordinates",
        map.entries.len(),
        map.mapped().count(),
        cfg.threshold,
        map.missing_coordinates()
    ))
}

/// Drop-one feature importance of the configured learner.
pub fn cmd_importance(cfg: &RunConfig) -> CliResult<String> {
    let inputs = load_inputs(cfg)?;
    let plan = grouped_kfold(&inputs.data.groups, cfg.folds, cfg.seed)?;
    let report = drop_one_importance(&cfg.importance, &inputs.data, &plan, cfg.seed)?;
    report.write_csv(create(&cfg.out, files::IMPORTANCE)?)?;
    let mut t = format!("importance for {}\n", cfg.importance.label());
    for (i, e) in report.entries.iter().take(10).enumerate() {
        t += &format!("{:>3}  {:<32} {:+.4}\n", i + 1, e.feature, e.delta);
    }
    Ok(t)
}
