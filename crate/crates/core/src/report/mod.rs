//! Batch runs: configuration, report artifacts and their consistency check.
//!
//! A batch writes four files into the output directory:
//! `records.csv`, `summary.json`, `trend.csv` and `filter_report.json`.
//! All four are rendered in memory first and then moved into place, so a
//! failed run leaves none of them behind.

mod compare;
mod series;
mod summary;
mod table;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use compare::{
    compare_volumes, format_compare_table, CompareOutput, CompareRow, COMPARE_COLUMNS,
};
pub use series::{series_to_csv, trend_series, SessionVolume, TrendSeries, TREND_COLUMNS};
pub use summary::{
    check_summary, group_summaries, parse_summary, totals, BatchSummary, ConsistencyReport,
    GroupSummary, Totals,
};
pub use table::{format_sig6, parse_records_csv, records_to_csv, RecordRow, RECORD_COLUMNS};

use crate::error::{Error, Result};
use crate::harness::{
    build_plan, evaluate_plan, scan_dataset, summarize_acquisition, DatasetLayout, EvalConfig,
    MetricRecord, PairingPolicy, ReferenceChoice, ResampleConfig, SessionEntry,
};
use crate::metrics::DEFAULT_TOLERANCE_MM;
use crate::roi::{default_registry, RoiRegistry, Side};
use crate::stats::{apply_filter, BandKind, FilterReport, FilterRule};

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TREND_FILE: &str = "trend.csv";
pub const FILTER_FILE: &str = "filter_report.json";

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE_MM
}
fn default_filters() -> Vec<FilterRule> {
    FilterRule::standard_set()
}
fn default_sides() -> Vec<Side> {
    vec![Side::Left, Side::Right]
}

/// Everything a batch run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    #[serde(default)]
    pub layout: DatasetLayout,
    #[serde(default)]
    pub policy: PairingPolicy,
    /// ROI registry JSON; the built-in 17-region table when absent.
    #[serde(default)]
    pub registry: Option<PathBuf>,
    #[serde(default = "default_tolerance")]
    pub tolerance_mm: f64,
    #[serde(default = "default_filters")]
    pub filters: Vec<FilterRule>,
    #[serde(default)]
    pub resample: Option<ResampleConfig>,
    pub output_dir: PathBuf,
    /// Worker cap; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Seed for synthetic data generation.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_sides")]
    pub sides: Vec<Side>,
    #[serde(default)]
    pub band: BandKind,
    /// Explicit `<subject>/<session>` list; every scanned session when absent.
    #[serde(default)]
    pub sessions: Option<Vec<String>>,
}

impl RunConfig {
    pub fn new(dataset_root: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            dataset_root: dataset_root.into(),
            layout: DatasetLayout::default(),
            policy: PairingPolicy::default(),
            registry: None,
            tolerance_mm: DEFAULT_TOLERANCE_MM,
            filters: default_filters(),
            resample: None,
            output_dir: output_dir.into(),
            jobs: None,
            seed: None,
            sides: default_sides(),
            band: BandKind::default(),
            sessions: None,
        }
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads, validates and resolves relative paths of a config file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = Self::from_json(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(config.resolved(base))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serialisable") + "\n"
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance_mm.is_finite() && self.tolerance_mm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance_mm must be positive, got {}",
                self.tolerance_mm
            )));
        }
        for rule in &self.filters {
            rule.validate()?;
        }
        if self.sides.is_empty() {
            return Err(Error::InvalidArgument("sides must not be empty".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidArgument("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// The same config with relative paths joined onto `base`.
    pub fn resolved(mut self, base: &Path) -> Self {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.dataset_root);
        join(&mut self.output_dir);
        if let Some(r) = self.registry.as_mut() {
            join(r);
        }
        if let Some(rs) = self.resample.as_mut() {
            if let ReferenceChoice::Atlas(p) = &mut rs.reference {
                join(p);
            }
            for p in rs.transforms.values_mut() {
                join(p);
            }
        }
        self
    }

    pub fn registry(&self) -> Result<RoiRegistry> {
        match &self.registry {
            Some(p) => RoiRegistry::from_json_file(p),
            None => Ok(default_registry()),
        }
    }
}

/// Identifies one record in the filter report.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub subject_id: String,
    pub session_a: String,
    pub session_b: String,
    pub roi: String,
    pub side: Side,
}

impl RecordKey {
    pub fn of(r: &MetricRecord) -> Self {
        RecordKey {
            subject_id: r.subject_id.clone(),
            session_a: r.session_a.clone(),
            session_b: r.session_b.clone(),
            roi: r.roi_name.clone(),
            side: r.side,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterEntry {
    #[serde(flatten)]
    pub report: FilterReport,
    pub removed: Vec<RecordKey>,
}

/// In-memory result of a batch run.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub records: Vec<MetricRecord>,
    pub summary: BatchSummary,
    pub filters: Vec<FilterEntry>,
    pub trends: Vec<TrendSeries>,
    /// File name and contents of each artifact.
    pub artifacts: Vec<(&'static str, Vec<u8>)>,
}

fn select_sessions(
    all: Vec<SessionEntry>,
    wanted: &Option<Vec<String>>,
) -> Result<Vec<SessionEntry>> {
    let Some(wanted) = wanted else {
        return Ok(all);
    };
    let wanted: BTreeSet<&str> = wanted.iter().map(String::as_str).collect();
    let available: BTreeSet<String> = all.iter().map(|s| s.meta.key()).collect();
    if let Some(missing) = wanted.iter().find(|k| !available.contains(**k)) {
        return Err(Error::InvalidArgument(format!(
            "session {missing} not found in dataset"
        )));
    }
    Ok(all
        .into_iter()
        .filter(|s| wanted.contains(s.meta.key().as_str()))
        .collect())
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report is serialisable");
    bytes.push(b'\n');
    bytes
}

/// Scans, evaluates, filters and renders every artifact without touching
/// the output directory.
pub fn evaluate_batch(config: &RunConfig) -> Result<BatchResult> {
    config.validate()?;
    let registry = config.registry()?;
    let sessions = select_sessions(
        scan_dataset(&config.dataset_root, config.layout)?,
        &config.sessions,
    )?;
    let plan = build_plan(&sessions, config.policy)?;
    let eval = EvalConfig {
        tolerance_mm: config.tolerance_mm,
        sides: config.sides.clone(),
        resample: config.resample.clone(),
        jobs: config.jobs,
    };
    let records = evaluate_plan(&plan, &registry, &eval)?;

    let records_csv = records_to_csv(&records)?;
    // The summary is derived from the rows as written so that it can be
    // re-derived from records.csv exactly.
    let rows = parse_records_csv(&records_csv)?;
    let metas: Vec<_> = sessions.iter().map(|s| s.meta.clone()).collect();
    let summary = BatchSummary {
        tolerance_mm: config.tolerance_mm,
        policy: config.policy,
        totals: totals(&rows),
        groups: group_summaries(&rows),
        acquisition: summarize_acquisition(&metas),
    };

    let mut filters = Vec::with_capacity(config.filters.len());
    for rule in &config.filters {
        let outcome = apply_filter(&records, rule)?;
        filters.push(FilterEntry {
            report: outcome.report,
            removed: outcome.removed.iter().map(RecordKey::of).collect(),
        });
    }
    let trends = trend_series(&records, config.band);
    let artifacts = vec![
        (RECORDS_FILE, records_csv),
        (SUMMARY_FILE, json_bytes(&summary)),
        (TREND_FILE, series_to_csv(&trends)?),
        (FILTER_FILE, json_bytes(&filters)),
    ];
    Ok(BatchResult {
        records,
        summary,
        filters,
        trends,
        artifacts,
    })
}

/// Writes `files` into `dir` through temporary files and renames. On error
/// every file already moved into place is removed again.
pub fn write_atomically(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = tempfile::Builder::new()
            .prefix(&format!(".{name}."))
            .tempfile_in(dir)
            .map_err(|e| Error::io(dir, e))?;
        tmp.write_all(bytes)
            .and_then(|_| tmp.as_file().sync_all())
            .map_err(|e| Error::io(tmp.path(), e))?;
        staged.push((dir.join(name), tmp));
    }
    let mut placed: Vec<PathBuf> = Vec::with_capacity(staged.len());
    for (target, tmp) in staged {
        if let Err(e) = tmp.persist(&target) {
            for p in &placed {
                let _ = fs::remove_file(p);
            }
            return Err(Error::io(&target, e.error));
        }
        placed.push(target);
    }
    Ok(placed)
}

/// Runs a batch and writes its artifacts into `config.output_dir`.
pub fn run_batch(config: &RunConfig) -> Result<BatchResult> {
    let result = evaluate_batch(config)?;
    write_atomically(&config.output_dir, &result.artifacts)?;
    Ok(result)
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let p = dir.join(name);
    fs::read(&p).map_err(|e| Error::io(p, e))
}

/// Re-derives summary.json from records.csv and cross-checks the filter
/// report and trend table against the records.
pub fn check_outputs(dir: impl AsRef<Path>) -> Result<ConsistencyReport> {
    let dir = dir.as_ref();
    let rows = parse_records_csv(&read(dir, RECORDS_FILE)?)?;
    let summary = parse_summary(&read(dir, SUMMARY_FILE)?)?;
    let mut report = check_summary(&rows, &summary);

    let filters: Vec<FilterEntry> =
        serde_json::from_slice(&read(dir, FILTER_FILE)?).map_err(|e| Error::Parse {
            path: dir.join(FILTER_FILE),
            message: e.to_string(),
        })?;
    let keys: BTreeSet<RecordKey> = rows
        .iter()
        .map(|r| RecordKey {
            subject_id: r.subject_id.clone(),
            session_a: r.session_a.clone(),
            session_b: r.session_b.clone(),
            roi: r.roi.clone(),
            side: r.side,
        })
        .collect();
    for f in &filters {
        let r = &f.report;
        let in_scope = rows
            .iter()
            .filter(|x| r.rule.scope.contains(x.roi_class))
            .count();
        let label = format!(
            "{:?} {} {:?}",
            r.rule.metric, r.rule.threshold, r.rule.scope
        );
        if r.structures_total != in_scope {
            report.mismatches.push(format!(
                "filter {label}: {} structures reported, {in_scope} in records.csv",
                r.structures_total
            ));
        }
        if r.structures_removed != f.removed.len() {
            report.mismatches.push(format!(
                "filter {label}: removed count disagrees with removed list"
            ));
        }
        if f.removed.iter().any(|k| !keys.contains(k)) {
            report.mismatches.push(format!(
                "filter {label}: removed record missing from records.csv"
            ));
        }
    }

    let trend = read(dir, TREND_FILE)?;
    let trend_rows = csv::Reader::from_reader(trend.as_slice()).records().count();
    let sessions: BTreeSet<(&str, &str, Side, &str)> = rows
        .iter()
        .flat_map(|r| {
            [
                (
                    r.subject_id.as_str(),
                    r.roi.as_str(),
                    r.side,
                    r.session_a.as_str(),
                ),
                (
                    r.subject_id.as_str(),
                    r.roi.as_str(),
                    r.side,
                    r.session_b.as_str(),
                ),
            ]
        })
        .collect();
    if trend_rows != sessions.len() {
        report.mismatches.push(format!(
            "trend.csv has {trend_rows} rows, records.csv implies {}",
            sessions.len()
        ));
    }
    Ok(report)
}
