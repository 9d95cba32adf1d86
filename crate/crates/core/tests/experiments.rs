use fdb_core::experiment::{
    emit_report, read_report_json, run_coverage_experiment, run_isotropy_experiment, summarize, ExperimentConfig,
    OutputFormat,
};
use fdb_core::Method;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_text(text, "test").unwrap()
}

#[test]
fn zero_process_is_always_covered() {
    let cfg = config(
        "process = zero\ngrid.sizes = 12x12\nblock.sizes = 3x3\nmethods = fdwb, hfdb, hfdb_bias, subsample\n\
         replicates = 1\nboot.B = 100\n",
    );
    let report = run_coverage_experiment(&cfg).unwrap();
    assert_eq!(report.summary.len(), 4);
    for row in &report.summary {
        assert_eq!(row.proportion, 1.0, "{row:?}");
    }
}

#[test]
fn one_row_per_cell() {
    let cfg = config(
        "model = spherical\nmodel.ratio = 1, 1.5\ngrid.sizes = 12x12, 14x10\nblock.sizes = 3x3, 4x3\n\
         methods = fdwb, subsample\nreplicates = 3\nboot.B = 100\n",
    );
    let report = run_isotropy_experiment(&cfg).unwrap();
    assert_eq!(report.summary.len(), 2 * 2 * 2 * 2);
    assert_eq!(report.replicates.len(), 2 * 2 * 2 * 2 * 3);
    for row in &report.summary {
        assert_eq!(row.replicates, 3);
    }
    assert!(report.row(Method::Subsample, (14, 10), "4x3", 1.5).is_some());
}

#[test]
fn summary_matches_replicate_file() {
    let cfg = config(
        "model = matern\ngrid.sizes = 16x16\nblock.sizes = 4x4, 5x5\nmethods = fdwb, hfdb_bias, subsample\n\
         replicates = 8\nboot.B = 100\nseed = 12\n",
    );
    let report = run_coverage_experiment(&cfg).unwrap();
    assert_eq!(summarize(&report.replicates), report.summary);

    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("cov");
    let (summary_path, replicate_path) = emit_report(&report, &stem, OutputFormat::Csv).unwrap();

    let mut hits = std::collections::BTreeMap::<(String, String), (usize, usize)>::new();
    let mut reader = csv::Reader::from_path(&replicate_path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (m, b, c) = (col("method"), col("block"), col("covered"));
    for rec in reader.records() {
        let rec = rec.unwrap();
        let e = hits.entry((rec[m].to_string(), rec[b].to_string())).or_default();
        e.0 += usize::from(&rec[c] == "true");
        e.1 += 1;
    }
    let mut reader = csv::Reader::from_path(&summary_path).unwrap();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let (h, r) = hits[&(rec[0].to_string(), rec[3].to_string())];
        let p: f64 = rec[6].parse().unwrap();
        assert_eq!(p, h as f64 / r as f64);
        let se: f64 = rec[7].parse().unwrap();
        assert!((se - (p * (1.0 - p) / r as f64).sqrt()).abs() < 1e-12);
        rows += 1;
    }
    assert_eq!(rows, hits.len());
}

#[test]
fn json_report_round_trips() {
    let cfg = config(
        "model = spherical\nmodel.ratio = 1.2\ngrid.sizes = 14x14\nblock.auto = minvol\nmethods = hfdb, subsample\n\
         replicates = 3\nboot.B = 100\ntest.form = variogram\n",
    );
    let report = run_isotropy_experiment(&cfg).unwrap();
    assert!(report.replicates.iter().all(|r| r.block == "minvol"));
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("iso");
    emit_report(&report, &stem, OutputFormat::Json).unwrap();
    assert_eq!(read_report_json(&stem).unwrap(), report);
}

#[test]
fn seeds_fix_the_outcome() {
    let text = "grid.sizes = 12x12\nblock.sizes = 3x3\nmethods = hfdb\nreplicates = 4\nboot.B = 100\n";
    let a = run_coverage_experiment(&config(&format!("{text}seed = 1\n"))).unwrap();
    let b = run_coverage_experiment(&config(&format!("{text}seed = 1\n"))).unwrap();
    let c = run_coverage_experiment(&config(&format!("{text}seed = 2\n"))).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.replicates, c.replicates);
}
