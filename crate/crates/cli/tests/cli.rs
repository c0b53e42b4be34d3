use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn kyle_eq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kyle-eq")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Value {
    let out = kyle_eq(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/run_config.json")
}

/// Data rows of a CSV artifact after checking the provenance line.
fn csv_rows(path: impl AsRef<Path>, header: &str, hash: &str) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let prov = lines.next().unwrap();
    assert!(prov.starts_with(&format!("# config_sha256={hash} seed=")), "{prov}");
    assert_eq!(lines.next().unwrap(), header);
    assert!(!text.contains('\r'));
    lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

#[test]
fn gaussian_kappa_one_and_a_half() {
    let dir = TempDir::new().unwrap();
    let doc = run_ok(&["gaussian", "--kappa", "1.5", "--out", dir.path().to_str().unwrap()]);
    assert!((doc["Lambda"].as_f64().unwrap() - 0.5).abs() <= 1e-14);
    assert!((doc["expected_penalty"].as_f64().unwrap() + 0.75 * 0.75f64.ln()).abs() < 1e-12);
    assert!((doc["inefficiency_delta"].as_f64().unwrap() - 0.75).abs() < 1e-14);
    let file = read_json(dir.path().join("gaussian_summary.json"));
    assert_eq!(file, doc);
    assert_eq!(doc["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn sweep_penalty_curve() {
    let dir = TempDir::new().unwrap();
    let doc = run_ok(&["sweep", "--out", dir.path().to_str().unwrap()]);
    let hash = doc["provenance"]["config_sha256"].as_str().unwrap();
    let rows = csv_rows(
        dir.path().join("sweep.csv"),
        "kappa,Lambda,wealth,penalty,welfare,noise_loss,delta,avg_entropy",
        hash,
    );
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[0][0], 1e-2);
    assert_eq!(rows[199][0], 1e2);
    let ratio = rows[1][0] / rows[0][0];
    assert!(rows.windows(2).all(|w| (w[1][0] / w[0][0] - ratio).abs() < 1e-12));
    assert!(rows.iter().all(|r| r[3] <= 0.5));
    // endpoint values from −(κ/2)·log(1 − Λ²)
    assert!((rows[0][3] - 0.0230509).abs() < 1e-6);
    assert!((rows[199][3] - 0.0049993).abs() < 1e-6);
}

#[test]
fn solve_bernoulli_converges() {
    let dir = TempDir::new().unwrap();
    let doc = run_ok(&["solve", "--p", "0.5", "--c", "1", "--sigma", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(doc["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(doc["phi_csv_path"], "phi.csv");
    let hash = doc["provenance"]["config_sha256"].as_str().unwrap();
    let phi = csv_rows(dir.path().join("phi.csv"), "y,value", hash);
    assert_eq!(phi.len(), 1601);
    // fair coin on {0, 1} with ĉ = 1: Ψ ≡ 0, so φ(y) = log((1 + e^y)/2)
    for r in phi.iter().filter(|r| r[0].abs() <= 6.0) {
        assert!((r[1] - (0.5 * (1.0 + r[0].exp())).ln()).abs() < 1e-7, "{r:?}");
    }
}

#[test]
fn bernoulli_closed_form() {
    let dir = TempDir::new().unwrap();
    let doc = run_ok(&["bernoulli", "--p", "0.5", "--c", "1", "--sigma", "1", "--out", dir.path().to_str().unwrap()]);
    assert!((doc["a"].as_f64().unwrap() - 1.0).abs() < 1e-10);
    assert!(doc["psi0"].as_f64().unwrap().abs() < 1e-10);
    assert!(doc["psi1"].as_f64().unwrap().abs() < 1e-10);
    assert!(dir.path().join(doc["phi_csv_path"].as_str().unwrap()).exists());
}

#[test]
fn analyze_writes_surfaces() {
    let dir = TempDir::new().unwrap();
    let doc = run_ok(&["analyze", "--p", "0.5", "--out", dir.path().to_str().unwrap()]);
    let hash = doc["provenance"]["config_sha256"].as_str().unwrap();
    let h = csv_rows(dir.path().join(doc["H_surface_csv"].as_str().unwrap()), "t,y,H", hash);
    assert_eq!(h.len(), 51 * 201);
    let alpha = csv_rows(dir.path().join(doc["alpha_surface_csv"].as_str().unwrap()), "t,y,v,alpha", hash);
    assert_eq!(alpha.len(), 50 * 201 * 2);
    assert!(h.iter().all(|r| r[2] > 0.0 && r[2] < 1.0));
    let value = doc["value"].as_array().unwrap();
    assert_eq!(value.len(), 2);
    // δ = c × noise loss with c = 1
    assert!((doc["delta"].as_f64().unwrap() - doc["noise_loss"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn simulate_is_reproducible_from_written_config() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let cfg = a.path().join("written.json");
    let first = run_ok(&[
        "simulate", "--kappa", "1.5", "--paths", "2000", "--steps", "100", "--seed", "7",
        "--write-config", cfg.to_str().unwrap(), "--out", a.path().to_str().unwrap(),
    ]);
    let second = run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert_eq!(first, second);
    assert_eq!(
        fs::read(a.path().join("mc_report.json")).unwrap(),
        fs::read(b.path().join("mc_report.json")).unwrap()
    );
    assert_eq!(first["provenance"]["seed"], 7);
    assert_eq!(first["config"]["n_paths"], 2000);
    assert!(first["estimates"]["insider_wealth"]["se"].as_f64().unwrap() > 0.0);
}

#[test]
fn golden_config_round_trip() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let g = golden();
    let first = run_ok(&["solve", "--config", g.to_str().unwrap(), "--out", out]);
    let mut expected = read_json(&g);
    expected["outputs"]["dir"] = Value::from(out);
    assert_eq!(read_json(dir.path().join("config.json")), expected);

    let again = TempDir::new().unwrap();
    let rewritten = dir.path().join("config.json");
    let second = run_ok(&["solve", "--config", rewritten.to_str().unwrap(), "--out", again.path().to_str().unwrap()]);
    assert_eq!(first, second);
    assert_eq!(first["provenance"]["seed"], 11);
    assert_eq!(fs::read(dir.path().join("phi.csv")).unwrap(), fs::read(again.path().join("phi.csv")).unwrap());
}

#[test]
fn json_only_output_skips_csv() {
    let dir = TempDir::new().unwrap();
    let mut cfg = read_json(golden());
    cfg["outputs"]["formats"] = serde_json::json!(["json"]);
    let path = dir.path().join("cfg.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let doc = run_ok(&["bernoulli", "--config", path.to_str().unwrap(), "--p", "0.3", "--out", dir.path().to_str().unwrap()]);
    assert!(doc["phi_csv_path"].is_null());
    assert!(!dir.path().join("phi.csv").exists());
    assert!(dir.path().join("bernoulli.json").exists());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();

    let bad = kyle_eq(&["solve", "--sigma", "-1", "--out", out]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(stderr_json(&bad)["error"], "config");

    let kappa_discrete = kyle_eq(&["gaussian", "--p", "0.5", "--kappa", "1", "--out", out]);
    assert_eq!(kappa_discrete.status.code(), Some(2));

    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, "{ not json").unwrap();
    let unreadable = kyle_eq(&["solve", "--config", garbage.to_str().unwrap()]);
    assert_eq!(unreadable.status.code(), Some(2));
    assert_eq!(stderr_json(&unreadable)["exit_code"], 2);

    let unknown = kyle_eq(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
    stderr_json(&unknown);

    let stalled = kyle_eq(&["solve", "--p", "0.5", "--max-iter", "2", "--out", out]);
    assert_eq!(stalled.status.code(), Some(3));
    let err = stderr_json(&stalled);
    assert_eq!(err["error"], "non_convergence");
    assert_eq!(err["detail"]["history"].as_array().unwrap().len(), 2);

    let degenerate = kyle_eq(&["bernoulli", "--p", "0.5", "--c", "1e-300", "--out", out]);
    assert_eq!(degenerate.status.code(), Some(4));
    assert_eq!(stderr_json(&degenerate)["error"], "numerical");
}
