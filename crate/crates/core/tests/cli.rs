use std::process::{Command, Output};

use isotns::experiments::CSV_HEADER;

fn isotns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isotns")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn sample_writes_csv_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("run.json");
    let o = isotns(&["sample", "--size", "6", "--samples", "200", "--json", json.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 12);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(manifest["records"].as_array().unwrap().len(), 12);
}

#[test]
fn config_files_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ttns.cfg");
    let csv = dir.path().join("ttns.csv");
    std::fs::write(&cfg, "family = ttns\nsize = 5\nsamples = 100\nseed = 3\n").unwrap();
    let o = isotns(&["sample", "--config", cfg.to_str().unwrap(), "--size", "4", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = isotns::experiments::read_csv(&csv).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.size == 4 && r.n_samples == 100 && r.seed == 3));

    let o = isotns(&["fit", csv.to_str().unwrap(), "--fit-min", "1", "--fit-max", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("factor"));
}

#[test]
fn validation_errors_exit_with_one() {
    assert_eq!(isotns(&["sample", "--chi", "zero"]).status.code(), Some(1));
    assert_eq!(isotns(&["sample", "--family", "peps"]).status.code(), Some(1));
    assert_eq!(isotns(&["bogus"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(isotns(&["sample", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(isotns(&["fit", dir.path().join("missing.csv").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn fits_of_nonpositive_means_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    let rows: String = (1..=5).map(|t| format!("mera-binary,2,2,5,{t},false,0,10,{},0.1,1\n", if t == 2 { -1.0 } else { 0.5 })).collect();
    std::fs::write(&csv, format!("{CSV_HEADER}\n{rows}")).unwrap();
    assert_eq!(isotns(&["fit", csv.to_str().unwrap(), "--fit-min", "1", "--fit-max", "4"]).status.code(), Some(2));
}

#[test]
fn spectrum_reports_the_binary_mera_eigenvalues() {
    let o = isotns(&["spectrum", "--family", "mera", "--chi", "2", "--top", "3"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let ev: Vec<f64> = v["eigenvalues"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((ev[0] - 1.0).abs() < 1e-10 && (ev[1] - 0.2592).abs() < 1e-10 && (ev[2] - 0.144).abs() < 1e-10);
}

#[test]
fn predict_and_selftest_succeed() {
    let o = isotns(&["predict", "--chi-list", "2,4"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("eta"));
    let o = isotns(&["selftest"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}
