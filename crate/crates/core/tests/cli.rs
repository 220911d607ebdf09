use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lgtc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgtc")).args(args).env("LGTC_THREADS", "2").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn refined_max(text: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with("refined max")).expect("refined line");
    line.split_whitespace().nth(4).unwrap().parse().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn scan_qubit_peaks_at_three_halves() {
    let o = lgtc(&["scan", "--j", "0.5", "--steps", "201"]);
    assert_eq!(o.status.code(), Some(0));
    assert!((refined_max(&stdout(&o)) - 1.5).abs() < 1e-8);
}

#[test]
fn scan_qutrit_exceeds_qubit_bound() {
    let o = lgtc(&["scan", "--j", "1", "--steps", "201"]);
    assert_eq!(o.status.code(), Some(0));
    assert!((refined_max(&stdout(&o)) - 1.7565).abs() < 1e-4);
}

#[test]
fn scan_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan.csv");
    let o = lgtc(&["scan", "--j", "1.5", "--steps", "11", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "schema_version,j,N,omega_tau,K3");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    assert!(rows[0].starts_with("1,1.5,4,0.0,"));

    let run = read_json(&dir.path().join("scan.csv.run.json"));
    assert_eq!(run["schema_version"], 1);
    assert_eq!(run["command"], "scan");
    assert_eq!(run["params"]["steps"], 11);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(lgtc(&["scan", "--j", "1", "--steps", "1"]).status.code(), Some(2));
    assert_eq!(lgtc(&["scan", "--j", "0.3"]).status.code(), Some(2));
    assert_eq!(lgtc(&["optimize", "--n", "2", "--m", "3"]).status.code(), Some(2));
    assert_eq!(lgtc(&["bound", "--m", "1"]).status.code(), Some(2));
    assert_eq!(lgtc(&["scan", "--j", "1", "--out", "/tmp/x.txt"]).status.code(), Some(2));
}

#[test]
fn bound_for_two_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    let o = lgtc(&["bound", "--m", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc = read_json(&out);
    assert_eq!(doc["schema_version"], 1);
    let row = &doc["bounds"][0];
    assert!((row["optimum"].as_f64().unwrap() - 1.5).abs() < 1e-7);
    assert_eq!(row["dim"], 19);
}

#[test]
fn export_sdpa_skips_the_solve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m4.dat-s");
    let o = lgtc(&["bound", "--m", "4", "--export-sdpa", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let problem = lgtc::sdpa::SdpaProblem::parse(&text).unwrap();
    assert_eq!(problem.block_sizes, vec![61]);
    assert!(!stdout(&o).contains("K3 <="));
}

#[test]
fn asymptote_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.json");
    let o = lgtc(&["asymptote", "--j-max", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc = read_json(&out);
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    let f = |r: &Value, k: &str| r[k].as_f64().unwrap();
    assert_eq!(f(&rows[0], "j"), 0.5);
    assert!((f(&rows[0], "K3_closed_form") - 1.0).abs() < 1e-15);
    for w in rows.windows(2) {
        assert!(f(&w[1], "K3_closed_form") > f(&w[0], "K3_closed_form"));
    }
    for r in rows {
        assert!((f(r, "K3_closed_form") - f(r, "K3_fixed_tau_simulated")).abs() < 1e-10);
    }
}

#[test]
fn optimize_writes_best_operators() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.json");
    let o =
        lgtc(&["optimize", "--n", "3", "--m", "2", "--restarts", "4", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc = read_json(&out);
    let k3 = doc["best"]["k3_max"].as_f64().unwrap();
    assert!((k3 - 1.5).abs() < 1e-6, "{k3}");
    assert_eq!(doc["results"][0]["N"], 3);
    assert_eq!(doc["best"]["rho0"]["re"].as_array().unwrap().len(), 3);
    let run = read_json(&dir.path().join("o.json.run.json"));
    assert_eq!(run["seed"], 7);
}
