//! Run configuration: a TOML file with `[run]`, `[data]`, `[synth]`,
//! `[learners.<name>]`, `[meta]`, `[evaluate]`, `[importance]` and
//! `[predict]` sections. Command-line flags override the scalar settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use leadrisk::learners::{ClassifierSpec, LearnerKind};
use leadrisk::synth::GeneratorConfig;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_BOOTSTRAP: usize = 200;
pub const DEFAULT_OUT: &str = "results";
pub const DECADE_RANGE: (i32, i32) = (1920, 1979);

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum GridValue {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: Option<u64>,
    folds: Option<usize>,
    out: Option<PathBuf>,
    threshold: Option<f64>,
    bins: Option<usize>,
    bootstrap: Option<usize>,
    threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    parcels: Option<PathBuf>,
    tests: Option<PathBuf>,
    service_lines: Option<PathBuf>,
    hydrants: Option<PathBuf>,
    inspections: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvaluate {
    learner: Option<String>,
    sizes: Option<Vec<usize>>,
    replicates: Option<usize>,
    validation_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImportance {
    learner: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPredict {
    model: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    run: RawRun,
    data: Option<RawData>,
    synth: Option<toml::Table>,
    #[serde(default)]
    learners: BTreeMap<String, BTreeMap<String, GridValue>>,
    meta: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    evaluate: RawEvaluate,
    #[serde(default)]
    importance: RawImportance,
    #[serde(default)]
    predict: RawPredict,
}

/// Values given on the command line; each one wins over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputFiles {
    pub parcels: PathBuf,
    pub tests: PathBuf,
    pub service_lines: Option<PathBuf>,
    pub hydrants: Option<PathBuf>,
    pub inspections: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files(InputFiles),
    /// Generate a synthetic city in memory.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateConfig {
    pub learner: ClassifierSpec,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub path: PathBuf,
    pub seed: u64,
    pub folds: usize,
    pub out: PathBuf,
    pub threshold: f64,
    pub bins: usize,
    pub bootstrap: usize,
    pub threads: Option<usize>,
    pub data: DataSource,
    pub synth: GeneratorConfig,
    /// Every grid point of every configured learner.
    pub grid: Vec<ClassifierSpec>,
    pub meta: ClassifierSpec,
    pub evaluate: EvaluateConfig,
    pub importance: ClassifierSpec,
    pub model: Option<PathBuf>,
}

impl RunConfig {
    /// Model file read by `predict`.
    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join(crate::files::MODEL))
    }
}

/// Line of `key` inside `[section]`, or of the section header itself when
/// `key` is `None`. Lines are 1-based.
fn locate(text: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') && line.ends_with(']') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if key.is_none() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if let (Some(k), Some((lhs, _))) = (key, line.split_once('=')) {
            if current == section && lhs.trim().trim_matches('"') == k {
                return Some(i + 1);
            }
        }
    }
    None
}

struct Reporter<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Reporter<'_> {
    fn at(&self, line: Option<usize>, msg: impl std::fmt::Display) -> CliError {
        match line {
            Some(l) => CliError::config(format!("{}:{l}: {msg}", self.path.display())),
            None => CliError::config(format!("{}: {msg}", self.path.display())),
        }
    }

    fn key(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> CliError {
        let line = locate(self.text, section, Some(key)).or_else(|| locate(self.text, section, None));
        self.at(line, msg)
    }

    fn section(&self, section: &str, msg: impl std::fmt::Display) -> CliError {
        self.at(locate(self.text, section, None), msg)
    }

    fn toml(&self, e: &toml::de::Error) -> CliError {
        let line = e.span().map(|s| self.text[..s.start.min(self.text.len())].matches('\n').count() + 1);
        self.at(line, e.message().trim())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn expand_grid(kind: LearnerKind, params: &BTreeMap<String, GridValue>) -> Vec<ClassifierSpec> {
    let mut specs = vec![ClassifierSpec::new(kind)];
    for (key, value) in params {
        let values = match value {
            GridValue::One(v) => vec![*v],
            GridValue::Many(v) => v.clone(),
        };
        specs = specs.iter().flat_map(|s| values.iter().map(|&v| s.clone().with(key, v))).collect();
    }
    specs
}

fn learner_for(
    name: Option<&str>,
    grid: &[ClassifierSpec],
    section: &str,
    report: &Reporter,
) -> CliResult<ClassifierSpec> {
    let kind = match name {
        None => LearnerKind::Gbt,
        Some(n) => LearnerKind::parse(n).ok_or_else(|| report.key(section, "learner", format!("unknown learner `{n}`")))?,
    };
    Ok(grid.iter().find(|s| s.kind == kind).cloned().unwrap_or_else(|| ClassifierSpec::new(kind)))
}

fn check_synth_keys(table: &toml::Table, report: &Reporter) -> CliResult<()> {
    let known = serde_json::to_value(GeneratorConfig::default()).expect("config serializes");
    for (key, value) in table {
        let Some(default) = known.get(key) else {
            return Err(report.key("synth", key, format!("unknown synth key `{key}`")));
        };
        if let (Some(sub), Some(known_sub)) = (value.as_table(), default.as_object()) {
            for k in sub.keys() {
                if !known_sub.contains_key(k) {
                    let section = format!("synth.{key}");
                    return Err(report.key(&section, k, format!("unknown {section} key `{k}`")));
                }
            }
        }
    }
    Ok(())
}

/// Reads and validates a configuration file.
pub fn load(path: &Path, overrides: &Overrides) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: cannot read config: {e}", path.display())))?;
    parse(&text, path, overrides)
}

/// Validates configuration text; `path` names the file in messages and
/// anchors relative paths.
pub fn parse(text: &str, path: &Path, overrides: &Overrides) -> CliResult<RunConfig> {
    let report = Reporter { path, text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| report.toml(&e))?;
    let base = path.parent().unwrap_or(Path::new("."));

    let seed = overrides
        .seed
        .or(raw.run.seed)
        .ok_or_else(|| report.section("run", "missing `seed` in [run]; a seed is mandatory"))?;
    let folds = overrides.folds.or(raw.run.folds).unwrap_or(DEFAULT_FOLDS);
    if folds < 2 {
        return Err(report.key("run", "folds", format!("folds must be at least 2, got {folds}")));
    }
    let threshold = overrides.threshold.or(raw.run.threshold).unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(report.key("run", "threshold", format!("threshold {threshold} outside [0, 1]")));
    }
    let bins = raw.run.bins.unwrap_or(DEFAULT_BINS);
    if bins < 2 {
        return Err(report.key("run", "bins", "bins must be at least 2"));
    }
    let bootstrap = raw.run.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP);
    if bootstrap < 1 {
        return Err(report.key("run", "bootstrap", "bootstrap must be at least 1"));
    }
    let threads = overrides.threads.or(raw.run.threads);
    if threads == Some(0) {
        return Err(report.key("run", "threads", "threads must be at least 1"));
    }
    let out = match (&overrides.out, &raw.run.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(base, o),
        (None, None) => resolve(base, Path::new(DEFAULT_OUT)),
    };

    let mut synth_table = raw.synth.clone().unwrap_or_default();
    check_synth_keys(&synth_table, &report)?;
    if !synth_table.contains_key("seed") {
        synth_table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    let synth: GeneratorConfig = toml::Value::Table(synth_table)
        .try_into()
        .map_err(|e: toml::de::Error| report.section("synth", e.message().trim()))?;
    synth.validate().map_err(|e| report.section("synth", e))?;

    let data = match &raw.data {
        None => DataSource::Synthetic,
        Some(d) => {
            let required = |key: &str, v: &Option<PathBuf>| -> CliResult<PathBuf> {
                let p = v.as_ref().ok_or_else(|| report.section("data", format!("missing `{key}` in [data]")))?;
                Ok(resolve(base, p))
            };
            let files = InputFiles {
                parcels: required("parcels", &d.parcels)?,
                tests: required("tests", &d.tests)?,
                service_lines: d.service_lines.as_ref().map(|p| resolve(base, p)),
                hydrants: d.hydrants.as_ref().map(|p| resolve(base, p)),
                inspections: d.inspections.as_ref().map(|p| resolve(base, p)),
            };
            let named = [
                ("parcels", Some(&files.parcels)),
                ("tests", Some(&files.tests)),
                ("service_lines", files.service_lines.as_ref()),
                ("hydrants", files.hydrants.as_ref()),
                ("inspections", files.inspections.as_ref()),
            ];
            for (key, p) in named {
                if let Some(p) = p {
                    if !p.is_file() {
                        return Err(report.key("data", key, format!("{key} file {} does not exist", p.display())));
                    }
                }
            }
            DataSource::Files(files)
        }
    };

    let mut grid = Vec::new();
    if raw.learners.is_empty() {
        grid = ClassifierSpec::default_first_layer();
    } else {
        for name in raw.learners.keys() {
            if LearnerKind::parse(name).is_none() {
                return Err(report.section(&format!("learners.{name}"), format!("unknown learner `{name}`")));
            }
        }
        for kind in LearnerKind::ALL {
            let tables: Vec<_> = raw.learners.iter().filter(|(n, _)| LearnerKind::parse(n) == Some(kind)).collect();
            if tables.len() > 1 {
                return Err(report.section(&format!("learners.{}", tables[1].0), format!("{kind} configured twice")));
            }
            let Some((name, params)) = tables.first() else { continue };
            let section = format!("learners.{name}");
            for (key, value) in params.iter() {
                if matches!(value, GridValue::Many(v) if v.is_empty()) {
                    return Err(report.key(&section, key, format!("empty grid for `{key}`")));
                }
            }
            for spec in expand_grid(kind, params) {
                spec.validate().map_err(|e| {
                    let key = params.keys().find(|k| e.to_string().contains(k.as_str())).map(String::as_str);
                    match key {
                        Some(k) => report.key(&section, k, &e),
                        None => report.section(&section, &e),
                    }
                })?;
                grid.push(spec);
            }
        }
    }

    let meta = match &raw.meta {
        None => ClassifierSpec::default_meta(),
        Some(params) => {
            let mut spec = ClassifierSpec::new(LearnerKind::Gbt);
            for (k, v) in params {
                spec = spec.with(k, *v);
            }
            spec.validate().map_err(|e| {
                match params.keys().find(|k| e.to_string().contains(k.as_str())) {
                    Some(k) => report.key("meta", k, &e),
                    None => report.section("meta", &e),
                }
            })?;
            spec
        }
    };

    let ev = &raw.evaluate;
    let evaluate = EvaluateConfig {
        learner: learner_for(ev.learner.as_deref(), &grid, "evaluate", &report)?,
        sizes: ev.sizes.clone().unwrap_or_else(|| vec![250, 500, 1000, 2000, 4000]),
        replicates: ev.replicates.unwrap_or(50),
        validation_fraction: ev.validation_fraction.unwrap_or(0.35),
    };
    if evaluate.sizes.is_empty() || evaluate.sizes.contains(&0) {
        return Err(report.key("evaluate", "sizes", "sizes must be a non-empty list of positive counts"));
    }
    if evaluate.replicates == 0 {
        return Err(report.key("evaluate", "replicates", "replicates must be at least 1"));
    }
    if !(evaluate.validation_fraction > 0.0 && evaluate.validation_fraction < 1.0) {
        return Err(report.key("evaluate", "validation_fraction", "validation_fraction must lie in (0, 1)"));
    }
    let importance = learner_for(raw.importance.learner.as_deref(), &grid, "importance", &report)?;

    Ok(RunConfig {
        path: path.to_path_buf(),
        seed,
        folds,
        out,
        threshold,
        bins,
        bootstrap,
        threads,
        data,
        synth,
        grid,
        meta,
        evaluate,
        importance,
        model: raw.predict.model.as_ref().map(|p| resolve(base, p)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(text: &str) -> CliResult<RunConfig> {
        parse(text, Path::new("/tmp/run.toml"), &Overrides::default())
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_str("[run]\nseed = 4\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.threshold, 0.1);
        assert_eq!(cfg.out, PathBuf::from("/tmp/results"));
        assert_eq!(cfg.data, DataSource::Synthetic);
        assert_eq!(cfg.synth.seed, 4);
        assert_eq!(cfg.grid.len(), 6);
        assert_eq!(cfg.meta, ClassifierSpec::default_meta());
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let err = parse_str("[run]\nfolds = 3\n").unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("/tmp/run.toml:1:"), "{}", err.message);
        assert!(err.message.contains("seed"));
        let ok = parse("[run]\nfolds = 3\n", Path::new("x.toml"), &Overrides { seed: Some(1), ..Default::default() });
        assert_eq!(ok.unwrap().seed, 1);
    }

    #[test]
    fn flags_beat_file_values() {
        let text = "[run]\nseed = 4\nfolds = 3\nthreshold = 0.2\nthreads = 2\n";
        let o = Overrides { seed: Some(9), threads: Some(8), out: Some("o".into()), threshold: Some(0.5), folds: Some(7) };
        let cfg = parse(text, Path::new("c.toml"), &o).unwrap();
        assert_eq!((cfg.seed, cfg.folds, cfg.threshold, cfg.threads), (9, 7, 0.5, Some(8)));
        assert_eq!(cfg.out, PathBuf::from("o"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_str("[run]\nseed = 1\n\n[learners.gbt]\ntrees = [10, 20]\nmax_depth = -3\n").unwrap_err();
        assert!(err.message.starts_with("/tmp/run.toml:6:"), "{}", err.message);

        let err = parse_str("[run]\nseed = 1\nfold = 3\n").unwrap_err();
        assert!(err.message.starts_with("/tmp/run.toml:3:"), "{}", err.message);

        let err = parse_str("[run]\nseed = 1\n[synth]\nn_parcel = 10\n").unwrap_err();
        assert!(err.message.starts_with("/tmp/run.toml:4:"), "{}", err.message);

        let err = parse_str("[run]\nseed = = 1\n").unwrap_err();
        assert!(err.message.starts_with("/tmp/run.toml:2:"), "{}", err.message);

        let err = parse_str("[run]\nseed = 1\n[learners.boosting]\ntrees = 3\n").unwrap_err();
        assert!(err.message.starts_with("/tmp/run.toml:3:"), "{}", err.message);
    }

    #[test]
    fn grid_is_a_cartesian_product() {
        let cfg =
            parse_str("[run]\nseed = 1\n[learners.gbt]\ntrees = [10, 20]\nmax_depth = [1, 2, 3]\n[learners.lda]\n")
                .unwrap();
        assert_eq!(cfg.grid.len(), 7);
        assert_eq!(cfg.grid.iter().filter(|s| s.kind == LearnerKind::Gbt).count(), 6);
        assert_eq!(cfg.evaluate.learner, cfg.grid[0]);
    }

    #[test]
    fn missing_data_file_points_at_its_line() {
        let err = parse_str("[run]\nseed = 1\n[data]\nparcels = \"/nonexistent/p.csv\"\ntests = \"/nonexistent/t.csv\"\n")
            .unwrap_err();
        assert!(err.message.starts_with("/tmp/run.toml:4:"), "{}", err.message);
    }
}
