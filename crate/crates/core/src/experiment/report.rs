//! Experiment reports and their CSV / JSON files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::infer::Method;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Coverage,
    Isotropy,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Isotropy => "isotropy",
        }
    }
}

/// One (replicate, block, method) outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub method: Method,
    pub n1: usize,
    pub n2: usize,
    /// Cell label: `b1xb2` or `minvol`.
    pub block: String,
    /// Block actually used for this replicate.
    pub b1: usize,
    pub b2: usize,
    pub ratio: f64,
    pub replicate: usize,
    pub mhat: f64,
    pub truth: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub covered: Option<bool>,
    pub ts: Option<f64>,
    pub p_value: Option<f64>,
    pub rejected: Option<bool>,
    pub sigma_sq_hat: Option<f64>,
    pub sigma1_sq_hat: Option<f64>,
    pub sigma2_sq_hat: Option<f64>,
    pub var_star: Option<f64>,
}

impl ReplicateRecord {
    /// The indicator a summary proportion counts.
    pub fn hit(&self) -> bool {
        self.covered.or(self.rejected).unwrap_or(false)
    }
}

/// Coverage or rejection proportion of one experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub n1: usize,
    pub n2: usize,
    pub block: String,
    pub ratio: f64,
    pub replicates: usize,
    pub proportion: f64,
    /// `sqrt(p (1 - p) / R)`.
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub summary: Vec<SummaryRow>,
    pub replicates: Vec<ReplicateRecord>,
}

impl ExperimentReport {
    /// Find the summary row of a cell.
    pub fn row(&self, method: Method, n: (usize, usize), block: &str, ratio: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method && (r.n1, r.n2) == n && r.block == block && r.ratio == ratio)
    }
}

/// Summary rows recomputed from replicate records, one per distinct
/// (grid, ratio, block, method) in first-appearance order.
pub fn summarize(records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<(SummaryRow, usize)> = Vec::new();
    for rec in records {
        let pos = rows.iter().position(|(r, _)| {
            r.method == rec.method && (r.n1, r.n2) == (rec.n1, rec.n2) && r.block == rec.block && r.ratio == rec.ratio
        });
        let idx = match pos {
            Some(i) => i,
            None => {
                rows.push((
                    SummaryRow {
                        method: rec.method,
                        n1: rec.n1,
                        n2: rec.n2,
                        block: rec.block.clone(),
                        ratio: rec.ratio,
                        replicates: 0,
                        proportion: 0.0,
                        std_error: 0.0,
                    },
                    0,
                ));
                rows.len() - 1
            }
        };
        rows[idx].0.replicates += 1;
        rows[idx].1 += rec.hit() as usize;
    }
    rows.into_iter()
        .map(|(mut row, hits)| {
            let r = row.replicates as f64;
            let p = hits as f64 / r;
            row.proportion = p;
            row.std_error = (p * (1.0 - p) / r).sqrt();
            row
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 8] = ["method", "n1", "n2", "block", "ratio", "replicates", "proportion", "std_error"];
const REPLICATE_HEADER: [&str; 21] = [
    "method",
    "n1",
    "n2",
    "block",
    "b1",
    "b2",
    "ratio",
    "replicate",
    "mhat",
    "truth",
    "lower",
    "upper",
    "covered",
    "ts",
    "p_value",
    "rejected",
    "sigma_sq_hat",
    "sigma1_sq_hat",
    "sigma2_sq_hat",
    "var_star",
    "kind",
];

/// Paths of the summary and per-replicate files for an output stem.
pub fn report_paths(stem: &Path, format: OutputFormat) -> (PathBuf, PathBuf) {
    let name = stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let ext = format.to_string();
    (stem.with_file_name(format!("{name}_summary.{ext}")), stem.with_file_name(format!("{name}_replicates.{ext}")))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format { path: path.to_path_buf(), message: e.to_string() }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `<stem>_summary.<ext>` and `<stem>_replicates.<ext>`.
pub fn emit_report(report: &ExperimentReport, stem: &Path, format: OutputFormat) -> Result<(PathBuf, PathBuf)> {
    let (summary_path, replicate_path) = report_paths(stem, format);
    if let Some(dir) = summary_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    match format {
        OutputFormat::Csv => {
            write_summary_csv(report, &summary_path)?;
            write_replicates_csv(report, &replicate_path)?;
        }
        OutputFormat::Json => {
            let summary = SummaryFile {
                schema_version: report.schema_version,
                kind: report.kind,
                config: report.config.clone(),
                summary: report.summary.clone(),
            };
            write_json(&summary, &summary_path)?;
            let reps = ReplicateFile { schema_version: report.schema_version, replicates: report.replicates.clone() };
            write_json(&reps, &replicate_path)?;
        }
    }
    Ok((summary_path, replicate_path))
}

#[derive(Serialize, Deserialize)]
struct SummaryFile {
    schema_version: u32,
    kind: ExperimentKind,
    config: ExperimentConfig,
    summary: Vec<SummaryRow>,
}

#[derive(Serialize, Deserialize)]
struct ReplicateFile {
    schema_version: u32,
    replicates: Vec<ReplicateRecord>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_summary_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err(path))?;
    for r in &report.summary {
        w.write_record([
            r.method.to_string(),
            r.n1.to_string(),
            r.n2.to_string(),
            r.block.clone(),
            r.ratio.to_string(),
            r.replicates.to_string(),
            r.proportion.to_string(),
            r.std_error.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_replicates_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(REPLICATE_HEADER).map_err(csv_err(path))?;
    for r in &report.replicates {
        w.write_record([
            r.method.to_string(),
            r.n1.to_string(),
            r.n2.to_string(),
            r.block.clone(),
            r.b1.to_string(),
            r.b2.to_string(),
            r.ratio.to_string(),
            r.replicate.to_string(),
            r.mhat.to_string(),
            opt(r.truth),
            opt(r.lower),
            opt(r.upper),
            opt(r.covered),
            opt(r.ts),
            opt(r.p_value),
            opt(r.rejected),
            opt(r.sigma_sq_hat),
            opt(r.sigma1_sq_hat),
            opt(r.sigma2_sq_hat),
            opt(r.var_star),
            report.kind.as_str().to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

/// Load a report written with [`OutputFormat::Json`].
pub fn read_report_json(stem: &Path) -> Result<ExperimentReport> {
    let (summary_path, replicate_path) = report_paths(stem, OutputFormat::Json);
    let s: SummaryFile = read_json(&summary_path)?;
    let r: ReplicateFile = read_json(&replicate_path)?;
    for (v, path) in [(s.schema_version, &summary_path), (r.schema_version, &replicate_path)] {
        if v != SCHEMA_VERSION {
            return Err(Error::Format { path: path.clone(), message: format!("unsupported schema version {v}") });
        }
    }
    Ok(ExperimentReport { schema_version: s.schema_version, kind: s.kind, config: s.config, summary: s.summary, replicates: r.replicates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: Method, block: &str, replicate: usize, covered: bool) -> ReplicateRecord {
        ReplicateRecord {
            method,
            n1: 8,
            n2: 8,
            block: block.into(),
            b1: 3,
            b2: 3,
            ratio: 1.0,
            replicate,
            mhat: 0.125,
            truth: Some(0.0),
            lower: Some(-0.1),
            upper: Some(0.3),
            covered: Some(covered),
            ts: None,
            p_value: None,
            rejected: None,
            sigma_sq_hat: Some(1.0 / 3.0),
            sigma1_sq_hat: Some(0.1),
            sigma2_sq_hat: Some(-0.2),
            var_star: None,
        }
    }

    fn report(records: Vec<ReplicateRecord>) -> ExperimentReport {
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            kind: ExperimentKind::Coverage,
            config: ExperimentConfig::default(),
            summary: summarize(&records),
            replicates: records,
        }
    }

    #[test]
    fn summary_proportions() {
        let recs = vec![
            record(Method::Fdwb, "3x3", 0, true),
            record(Method::Hfdb, "3x3", 0, false),
            record(Method::Fdwb, "3x3", 1, false),
            record(Method::Hfdb, "3x3", 1, false),
            record(Method::Fdwb, "3x3", 2, true),
            record(Method::Hfdb, "3x3", 2, true),
            record(Method::Fdwb, "3x3", 3, true),
            record(Method::Hfdb, "3x3", 3, false),
        ];
        let rows = summarize(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].method, rows[0].proportion), (Method::Fdwb, 0.75));
        assert!((rows[0].std_error - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!((rows[1].method, rows[1].proportion), (Method::Hfdb, 0.25));
    }

    #[test]
    fn empty_csv_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let (s, r) = emit_report(&report(vec![]), &dir.path().join("empty"), OutputFormat::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&s).unwrap(), SUMMARY_HEADER.join(",") + "\n");
        assert_eq!(std::fs::read_to_string(&r).unwrap(), REPLICATE_HEADER.join(",") + "\n");
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rep = report(vec![record(Method::Subsample, "minvol", 0, true), record(Method::Subsample, "minvol", 1, false)]);
        let stem = dir.path().join("run");
        emit_report(&rep, &stem, OutputFormat::Json).unwrap();
        assert_eq!(read_report_json(&stem).unwrap(), rep);
    }

    #[test]
    fn csv_rows_are_stable() {
        let dir = tempfile::tempdir().unwrap();
        let rep = report(vec![record(Method::Fdwb, "3x3", 0, true)]);
        let (s, r) = emit_report(&rep, &dir.path().join("x"), OutputFormat::Csv).unwrap();
        let summary = std::fs::read_to_string(s).unwrap();
        assert_eq!(summary.lines().nth(1).unwrap(), "fdwb,8,8,3x3,1,1,1,0");
        let reps = std::fs::read_to_string(r).unwrap();
        assert_eq!(reps.lines().nth(1).unwrap(), "fdwb,8,8,3x3,3,3,1,0,0.125,0,-0.1,0.3,true,,,,0.3333333333333333,0.1,-0.2,,coverage");
    }
}
