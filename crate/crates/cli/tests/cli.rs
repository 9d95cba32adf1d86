use std::path::Path;
use std::process::{Command, Output};

fn fdb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdb")).args(args).output().expect("run fdb")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).to_string_lossy().into_owned();
    let mut args = vec!["simulate", "--size", "24x20", "--seed", "5", "--out", path.as_str()];
    args.extend_from_slice(extra);
    let out = fdb(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn simulate_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.csv", &[]);
    let b = simulate(dir.path(), "b.csv", &[]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 24);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 20);
}

#[test]
fn estimate_reports_components() {
    let dir = tempfile::tempdir().unwrap();
    let field = simulate(dir.path(), "f.csv", &["--set", "model=spherical"]);
    let v = json(&fdb(&["estimate", "--input", &field, "--set", "block.sizes=5x4"]));
    assert_eq!(v["block"], serde_json::json!([5, 4]));
    let s = v["sigma_sq_hat"].as_f64().unwrap();
    let s1 = v["sigma1_sq_hat"].as_f64().unwrap();
    let s2 = v["sigma2_sq_hat"].as_f64().unwrap();
    assert!((s1 + s2 - s).abs() <= 1e-12 * s.abs().max(1.0));
    assert_eq!(v["floored_sigma2"].as_f64().unwrap(), s2.max(0.0));
    assert!(v["var_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn ci_lists_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let field = simulate(dir.path(), "f.bin", &[]);
    let v = json(&fdb(&[
        "ci",
        "--input",
        &field,
        "--set",
        "methods=fdwb,hfdb,hfdb_bias,subsample",
        "--set",
        "block.sizes=4x4",
        "--set",
        "boot.B=200",
    ]));
    let intervals = v["intervals"].as_array().unwrap();
    assert_eq!(intervals.len(), 4);
    for ci in intervals {
        assert!(ci["lower"].as_f64().unwrap() <= ci["upper"].as_f64().unwrap());
        assert_eq!(ci["level"].as_f64().unwrap(), 0.9);
    }
}

#[test]
fn isotropy_on_a_field() {
    let dir = tempfile::tempdir().unwrap();
    let field = simulate(dir.path(), "f.csv", &[]);
    for form in ["spectral", "variogram"] {
        let v = json(&fdb(&[
            "isotropy",
            "--input",
            &field,
            "--set",
            "methods=fdwb,hfdb,subsample",
            "--set",
            "block.sizes=5x5",
            "--set",
            &format!("test.form={form}"),
        ]));
        assert_eq!(v["form"], form);
        for r in v["results"].as_array().unwrap() {
            let p = r["p_value"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&p));
            assert_eq!(r["reject"].as_bool().unwrap(), p <= 0.1);
        }
    }
}

#[test]
fn blocksize_picks_a_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let field = simulate(dir.path(), "f.csv", &[]);
    let v = json(&fdb(&["blocksize", "--input", &field]));
    let selected = v["selected"].clone();
    let profile = v["profile"].as_array().unwrap();
    assert!(profile.len() >= 3);
    assert!(profile.iter().any(|p| serde_json::json!([p["b1"], p["b2"]]) == selected));
}

#[test]
fn coverage_prints_summary_or_writes_files() {
    let args = [
        "coverage",
        "--set",
        "grid.sizes=16x16",
        "--set",
        "replicates=6",
        "--set",
        "boot.B=100",
        "--set",
        "block.sizes=4x4,5x5",
        "--set",
        "methods=fdwb,subsample",
    ];
    let out = fdb(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,n1,n2,block,ratio,replicates,proportion,std_error");
    assert_eq!(lines.len(), 1 + 4);

    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("cov");
    let mut with_out = args.to_vec();
    let stem_s = stem.to_string_lossy().into_owned();
    with_out.extend_from_slice(&["--out", &stem_s, "--format", "json", "--workers", "2"]);
    let out = fdb(&with_out);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("cov_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert!(dir.path().join("cov_replicates.json").exists());
}

#[test]
fn isotropy_experiment_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("iso.cfg");
    std::fs::write(
        &cfg,
        "# small run\nprocess = gaussian\nmodel = spherical\nmodel.ratio = 1, 1.5\ngrid.sizes = 20x20\n\
         block.sizes = 5x5\nmethods = hfdb, subsample\nreplicates = 5\nboot.B = 100\n",
    )
    .unwrap();
    let out = fdb(&["isotropy", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 4);
}

#[test]
fn oracle_writes_a_fixture_usable_as_truth() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("truth.json");
    let fx = fixture.to_string_lossy().into_owned();
    let base = ["--set", "process=separable", "--set", "psi=cos_lag{h=(1,0)}"];
    let mut args = vec!["oracle", "--set", "oracle.grid=16x16", "--set", "oracle.replicates=10", "--out", &fx];
    args.extend_from_slice(&base);
    assert!(fdb(&args).status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&fixture).unwrap()).unwrap();
    assert_eq!(v["replicates"], 10);

    let truth = format!("truth.fixture={fx}");
    let mut cov = vec![
        "coverage",
        "--set",
        &truth,
        "--set",
        "grid.sizes=12x12",
        "--set",
        "replicates=3",
        "--set",
        "block.sizes=3x3",
        "--set",
        "methods=subsample",
    ];
    cov.extend_from_slice(&base);
    let out = fdb(&cov);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // A fixture for a different psi is refused.
    let out = fdb(&[
        "coverage",
        "--set",
        &truth,
        "--set",
        "process=separable",
        "--set",
        "psi=cos_lag{h=(0,1)}",
        "--set",
        "replicates=2",
    ]);
    assert!(!out.status.success());
}

#[test]
fn config_errors_exit_with_two() {
    let out = fdb(&["coverage", "--set", "no.such.key=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no.such.key"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "replicates = 3\nci.level = 1.5\n").unwrap();
    let out = fdb(&["coverage", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ci.level"));

    assert_eq!(fdb(&["estimate", "--input", "/nonexistent/field.csv"]).status.code(), Some(2));
    assert_eq!(fdb(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(fdb(&["coverage", "--workers", "0"]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.csv");
    let p = path.to_string_lossy().into_owned();
    assert!(fdb(&["simulate", "--size", "6x6", "--out", &p]).status.success());
    // One block covering the whole grid leaves a single subsample value.
    let out = fdb(&["ci", "--input", &p, "--set", "block.sizes=6x6", "--set", "methods=subsample"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
