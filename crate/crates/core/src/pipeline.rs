//! RR-interval ingestion, per-subject analysis and cohort reports.
//!
//! A subject series goes through window -> high-pass detrend -> normalize,
//! then the three surrogate tests run on one shared IAAFT ensemble. A cohort
//! run processes manifest rows in parallel with per-row seeds derived from
//! the master seed, then applies the group and condition test battery.
//! All outputs are assembled in manifest order so reports are byte-stable.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nltest::{detect_all, median, percentile, Measure, NonlinearityResult};
use crate::rng::{derive_seed, COHORT_STREAM, GENERATOR_ID};
use crate::series::{
    detrend_highpass, normalize, window, AnalysisParams, NormalizedSeries, RawSeries,
};
use crate::stats::{
    chi_square_proportions, kruskal_wallis, mcnemar, rank_sum, signed_rank, GroupSample,
    TestOutcome,
};

pub const INSUFFICIENT_DATA: &str = "insufficient data";

/// Parses one RR value per line. Blank lines and lines starting with '#' are
/// skipped; the first payload line may be a non-numeric header.
pub fn parse_series(text: &str, label: &str) -> Result<RawSeries> {
    let mut values = Vec::new();
    let mut seen_payload = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let first = !seen_payload;
        seen_payload = true;
        match line.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if first => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("not a number: '{line}'"),
                })
            }
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyInput(format!("no RR values in '{label}'")));
    }
    RawSeries::new(values, label)
}

/// Reads an RR file; the label is the file stem.
pub fn ingest_series(path: &Path) -> Result<RawSeries> {
    let text = fs::read_to_string(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_series(&text, &label)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub window_start: usize,
    pub window_len: usize,
    /// High-pass corner in cycles per beat.
    pub hp_cutoff: f64,
    /// Fewest usable samples accepted for analysis.
    pub min_samples: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            window_start: 0,
            window_len: 300,
            hp_cutoff: 0.03,
            min_samples: 300,
        }
    }
}

/// Window, detrend and normalize. Fewer than `min_samples` usable samples
/// gives `InsufficientData`.
pub fn preprocess(series: &RawSeries, config: &PreprocessConfig) -> Result<NormalizedSeries> {
    let values = series.values();
    let available = values.len().saturating_sub(config.window_start);
    let len = config.window_len.min(available);
    if len < config.min_samples.max(1) {
        return Err(Error::InsufficientData {
            needed: config.min_samples,
            got: len,
        });
    }
    let segment = window(values, config.window_start, len)?;
    normalize(&detrend_highpass(segment, config.hp_cutoff)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubjectOutcome {
    Analyzed { results: Vec<NonlinearityResult> },
    Skipped { reason: String },
}

impl SubjectOutcome {
    pub fn result(&self, measure: Measure) -> Option<&NonlinearityResult> {
        match self {
            Self::Analyzed { results } => results.iter().find(|r| r.measure == measure),
            Self::Skipped { .. } => None,
        }
    }
}

/// Full pipeline on one recording. Too-short series are skipped rather than
/// failing, as is a series whose surrogate tests cannot be completed.
pub fn run_subject(
    series: &RawSeries,
    params: &AnalysisParams,
    config: &PreprocessConfig,
) -> Result<SubjectOutcome> {
    params.validate()?;
    let normalized = match preprocess(series, config) {
        Ok(s) => s,
        Err(Error::InsufficientData { .. }) => {
            return Ok(SubjectOutcome::Skipped {
                reason: INSUFFICIENT_DATA.to_string(),
            })
        }
        Err(e) => return Err(e),
    };
    let mut results = Vec::with_capacity(Measure::ALL.len());
    for (measure, outcome) in detect_all(&normalized, params)? {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => {
                return Ok(SubjectOutcome::Skipped {
                    reason: format!("{measure} test failed: {e}"),
                })
            }
        }
    }
    Ok(SubjectOutcome::Analyzed { results })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub subject_id: String,
    pub group: String,
    pub condition: String,
    /// As written in the manifest.
    pub path: String,
}

/// Cohort description; relative paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub rows: Vec<ManifestRow>,
    pub base_dir: PathBuf,
}

const MANIFEST_HEADER: [&str; 4] = ["subject_id", "group", "condition", "path"];

impl CohortManifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != MANIFEST_HEADER {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "manifest header must be '{}', got '{}'",
                    MANIFEST_HEADER.join(","),
                    header.join(",")
                ),
            });
        }
        let mut rows: Vec<ManifestRow> = Vec::new();
        let mut seen = BTreeSet::new();
        for record in reader.deserialize() {
            let row: ManifestRow = record?;
            if [&row.subject_id, &row.group, &row.condition, &row.path]
                .iter()
                .any(|f| f.is_empty())
            {
                return Err(Error::InvalidInput(format!(
                    "manifest row {} has an empty field",
                    rows.len() + 1
                )));
            }
            if !seen.insert((row.subject_id.clone(), row.condition.clone())) {
                return Err(Error::InvalidInput(format!(
                    "duplicate manifest entry for subject '{}' condition '{}'",
                    row.subject_id, row.condition
                )));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::EmptyInput("manifest has no rows".into()));
        }
        let manifest = Self {
            rows,
            base_dir: base_dir.to_path_buf(),
        };
        if let Some(missing) = manifest
            .rows
            .iter()
            .find(|r| !manifest.resolve(r).is_file())
        {
            return Err(Error::InvalidInput(format!(
                "series file '{}' for subject '{}' not found",
                missing.path, missing.subject_id
            )));
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        self.base_dir.join(&row.path)
    }

    /// Group labels in order of first appearance.
    pub fn groups(&self) -> Vec<String> {
        first_appearance(self.rows.iter().map(|r| &r.group))
    }

    /// Condition labels in order of first appearance.
    pub fn conditions(&self) -> Vec<String> {
        first_appearance(self.rows.iter().map(|r| &r.condition))
    }
}

fn first_appearance<'a>(labels: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

/// Seed used for manifest row `row` under master seed `master`.
pub fn row_seed(master: u64, row: usize) -> u64 {
    derive_seed(derive_seed(master, COHORT_STREAM), row as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject: String,
    pub group: String,
    pub condition: String,
    pub path: String,
    pub seed: u64,
    pub n_samples: usize,
    #[serde(flatten)]
    pub outcome: SubjectOutcome,
}

/// Distribution of one (group, condition, measure) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub group: String,
    pub condition: String,
    pub measure: Measure,
    pub n: usize,
    pub median: f64,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub rejected: usize,
    pub rejection_pct: f64,
}

/// One entry of the cohort test battery. `outcome` is absent when the test
/// could not be run; `note` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTest {
    pub test: String,
    pub measure: Measure,
    pub groups: Vec<String>,
    pub conditions: Vec<String>,
    pub outcome: Option<TestOutcome>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub generator: String,
    pub master_seed: u64,
    pub params: AnalysisParams,
    pub preprocess: PreprocessConfig,
    pub records: Vec<SubjectRecord>,
    pub cells: Vec<CellSummary>,
    pub tests: Vec<CohortTest>,
    pub warnings: Vec<String>,
}

/// Runs every manifest row, then the cohort battery.
pub fn run_cohort(
    manifest: &CohortManifest,
    params: &AnalysisParams,
    config: &PreprocessConfig,
) -> Result<AnalysisReport> {
    params.validate()?;
    if manifest.rows.is_empty() {
        return Err(Error::EmptyInput("manifest has no rows".into()));
    }
    let records = manifest
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let series = ingest_series(&manifest.resolve(row))?;
            let seed = row_seed(params.seed, i);
            let row_params = AnalysisParams { seed, ..*params };
            Ok(SubjectRecord {
                subject: row.subject_id.clone(),
                group: row.group.clone(),
                condition: row.condition.clone(),
                path: row.path.clone(),
                seed,
                n_samples: series.len(),
                outcome: run_subject(&series, &row_params, config)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let groups = manifest.groups();
    let conditions = manifest.conditions();
    let mut warnings = Vec::new();
    for r in &records {
        if let SubjectOutcome::Skipped { reason } = &r.outcome {
            warnings.push(format!(
                "subject '{}' condition '{}' skipped: {reason}",
                r.subject, r.condition
            ));
        }
    }
    let cells = summarize(&records, &groups, &conditions)?;
    let tests = cohort_tests(&records, &groups, &conditions, &mut warnings);
    Ok(AnalysisReport {
        generator: GENERATOR_ID.to_string(),
        master_seed: params.seed,
        params: *params,
        preprocess: *config,
        records,
        cells,
        tests,
        warnings,
    })
}

fn cell_results<'a>(
    records: &'a [SubjectRecord],
    group: &'a str,
    condition: &'a str,
    measure: Measure,
) -> impl Iterator<Item = (&'a SubjectRecord, &'a NonlinearityResult)> + 'a {
    records
        .iter()
        .filter(move |r| r.group == group && r.condition == condition)
        .filter_map(move |r| r.outcome.result(measure).map(|res| (r, res)))
}

fn summarize(
    records: &[SubjectRecord],
    groups: &[String],
    conditions: &[String],
) -> Result<Vec<CellSummary>> {
    let mut cells = Vec::new();
    for group in groups {
        for condition in conditions {
            for measure in Measure::ALL {
                let results: Vec<&NonlinearityResult> =
                    cell_results(records, group, condition, measure)
                        .map(|(_, r)| r)
                        .collect();
                if results.is_empty() {
                    continue;
                }
                let values: Vec<f64> = results.iter().map(|r| r.ni_original).collect();
                let rejected = results.iter().filter(|r| r.rejected).count();
                cells.push(CellSummary {
                    group: group.clone(),
                    condition: condition.clone(),
                    measure,
                    n: values.len(),
                    median: median(&values)?,
                    p5: percentile(&values, 5.0)?,
                    p50: percentile(&values, 50.0)?,
                    p95: percentile(&values, 95.0)?,
                    rejected,
                    rejection_pct: 100.0 * rejected as f64 / values.len() as f64,
                });
            }
        }
    }
    Ok(cells)
}

fn test_entry(
    name: &str,
    measure: Measure,
    groups: Vec<String>,
    conditions: Vec<String>,
    outcome: Result<TestOutcome>,
) -> CohortTest {
    let (outcome, note) = match outcome {
        Ok(o) => (Some(o), None),
        Err(e) => (None, Some(e.to_string())),
    };
    CohortTest {
        test: name.to_string(),
        measure,
        groups,
        conditions,
        outcome,
        note,
    }
}

fn group_sample(
    records: &[SubjectRecord],
    group: &str,
    condition: &str,
    measure: Measure,
) -> Result<GroupSample> {
    let values = cell_results(records, group, condition, measure)
        .map(|(_, r)| r.ni_original)
        .collect();
    GroupSample::new(group, condition, values)
}

/// Subjects of `group` analyzed in both conditions, in record order.
fn paired<'a>(
    records: &'a [SubjectRecord],
    group: &'a str,
    first: &'a str,
    second: &'a str,
    measure: Measure,
) -> (
    Vec<(&'a NonlinearityResult, &'a NonlinearityResult)>,
    Vec<String>,
) {
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for (rec, a) in cell_results(records, group, first, measure) {
        let partner = records
            .iter()
            .find(|r| r.subject == rec.subject && r.group == rec.group && r.condition == second)
            .and_then(|r| r.outcome.result(measure));
        match partner {
            Some(b) => pairs.push((a, b)),
            None => unpaired.push(rec.subject.clone()),
        }
    }
    for (rec, _) in cell_results(records, group, second, measure) {
        let has_first = records.iter().any(|r| {
            r.subject == rec.subject
                && r.group == rec.group
                && r.condition == first
                && r.outcome.result(measure).is_some()
        });
        if !has_first {
            unpaired.push(rec.subject.clone());
        }
    }
    (pairs, unpaired)
}

fn cohort_tests(
    records: &[SubjectRecord],
    groups: &[String],
    conditions: &[String],
    warnings: &mut Vec<String>,
) -> Vec<CohortTest> {
    let mut tests = Vec::new();
    for measure in Measure::ALL {
        for condition in conditions {
            let cond = vec![condition.clone()];
            let samples: Result<Vec<GroupSample>> = groups
                .iter()
                .map(|g| group_sample(records, g, condition, measure))
                .collect();
            tests.push(test_entry(
                "kruskal_wallis",
                measure,
                groups.to_vec(),
                cond.clone(),
                samples.and_then(|s| kruskal_wallis(&s)),
            ));
            for (i, ga) in groups.iter().enumerate() {
                for gb in &groups[i + 1..] {
                    let pair = vec![ga.clone(), gb.clone()];
                    let outcome = group_sample(records, ga, condition, measure)
                        .and_then(|a| Ok((a, group_sample(records, gb, condition, measure)?)))
                        .and_then(|(a, b)| rank_sum(&a, &b));
                    tests.push(test_entry(
                        "wilcoxon_rank_sum",
                        measure,
                        pair.clone(),
                        cond.clone(),
                        outcome,
                    ));

                    let count = |g: &str| {
                        let flags: Vec<bool> = cell_results(records, g, condition, measure)
                            .map(|(_, r)| r.rejected)
                            .collect();
                        (
                            flags.iter().filter(|f| **f).count() as u64,
                            flags.len() as u64,
                        )
                    };
                    let ((k1, n1), (k2, n2)) = (count(ga), count(gb));
                    tests.push(test_entry(
                        "chi_square_proportions",
                        measure,
                        pair,
                        cond.clone(),
                        chi_square_proportions(k1, n1, k2, n2),
                    ));
                }
            }
        }
        for group in groups {
            for (i, ca) in conditions.iter().enumerate() {
                for cb in &conditions[i + 1..] {
                    let (pairs, unpaired) = paired(records, group, ca, cb, measure);
                    if !unpaired.is_empty() {
                        warnings.push(format!(
                            "{measure}: group '{group}' subjects without both '{ca}' and '{cb}' excluded from paired tests: {}",
                            unpaired.join(", ")
                        ));
                    }
                    let conds = vec![ca.clone(), cb.clone()];
                    let a: Vec<f64> = pairs.iter().map(|(x, _)| x.ni_original).collect();
                    let b: Vec<f64> = pairs.iter().map(|(_, y)| y.ni_original).collect();
                    tests.push(test_entry(
                        "wilcoxon_signed_rank",
                        measure,
                        vec![group.clone()],
                        conds.clone(),
                        signed_rank(&a, &b),
                    ));
                    let only_first = pairs
                        .iter()
                        .filter(|(x, y)| x.rejected && !y.rejected)
                        .count() as u64;
                    let only_second = pairs
                        .iter()
                        .filter(|(x, y)| !x.rejected && y.rejected)
                        .count() as u64;
                    tests.push(test_entry(
                        "mcnemar",
                        measure,
                        vec![group.clone()],
                        conds,
                        mcnemar(only_first, only_second),
                    ));
                }
            }
        }
    }
    tests
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format CSV: one row per (record, measure). Skipped records keep
/// their rows with empty value fields.
pub fn write_long_csv<W: Write>(report: &AnalysisReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "subject",
        "group",
        "condition",
        "measure",
        "value",
        "delta",
        "rejected",
        "seed",
    ])?;
    for rec in &report.records {
        for measure in Measure::ALL {
            let res = rec.outcome.result(measure);
            w.write_record([
                rec.subject.as_str(),
                &rec.group,
                &rec.condition,
                measure.name(),
                &fmt_opt(res.map(|r| r.ni_original)),
                &fmt_opt(res.map(|r| r.delta_ni)),
                &res.map(|r| r.rejected.to_string()).unwrap_or_default(),
                &rec.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-cell CSV: medians, 5th/50th/95th percentiles and rejection percentage.
pub fn write_summary_csv<W: Write>(report: &AnalysisReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "group",
        "condition",
        "measure",
        "n",
        "median",
        "p5",
        "p50",
        "p95",
        "rejected",
        "rejection_pct",
    ])?;
    for c in &report.cells {
        w.write_record([
            c.group.as_str(),
            &c.condition,
            c.measure.name(),
            &c.n.to_string(),
            &c.median.to_string(),
            &c.p5.to_string(),
            &c.p50.to_string(),
            &c.p95.to_string(),
            &c.rejected.to_string(),
            &c.rejection_pct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cohort battery CSV, one row per test.
pub fn write_tests_csv<W: Write>(report: &AnalysisReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "test",
        "measure",
        "groups",
        "conditions",
        "statistic",
        "p_value",
        "method",
        "n",
        "note",
    ])?;
    for t in &report.tests {
        let o = t.outcome.as_ref();
        w.write_record([
            t.test.as_str(),
            t.measure.name(),
            &t.groups.join("|"),
            &t.conditions.join("|"),
            &fmt_opt(o.map(|o| o.statistic)),
            &fmt_opt(o.map(|o| o.p_value)),
            &o.map(|o| {
                serde_json::to_value(o.method)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default()
            })
            .unwrap_or_default(),
            &o.map(|o| {
                o.n.iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join("|")
            })
            .unwrap_or_default(),
            t.note.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const REPORT_FILES: [&str; 4] = ["report.json", "long.csv", "summary.csv", "tests.csv"];

/// Writes the report files into `dir` (created if needed).
pub fn write_report(report: &AnalysisReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(dir.join(REPORT_FILES[0]), json)?;
    write_long_csv(report, fs::File::create(dir.join(REPORT_FILES[1]))?)?;
    write_summary_csv(report, fs::File::create(dir.join(REPORT_FILES[2]))?)?;
    write_tests_csv(report, fs::File::create(dir.join(REPORT_FILES[3]))?)?;
    Ok(())
}
