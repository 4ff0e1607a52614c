//! End-to-end checks of the `apovm` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn apovm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apovm")).args(args).output().expect("spawn apovm")
}

fn ok(args: &[&str]) -> String {
    let out = apovm(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a 3-qubit Ising chain and returns its path.
fn hamiltonian(dir: &Path) -> std::path::PathBuf {
    let obs = dir.join("tfim.txt");
    ok(&["gen-hamiltonian", "--model", "tfim", "--qubits", "3", "--out", p(&obs)]);
    obs
}

fn trace_lines(run: &Path, seed: u64) -> Vec<String> {
    fs::read_to_string(run.join(format!("seed-{seed}")).join("trace.csv")).unwrap().lines().map(String::from).collect()
}

#[test]
fn gen_hamiltonian_writes_terms() {
    let out = ok(&["gen-hamiltonian", "--model", "heisenberg", "--qubits", "3"]);
    assert_eq!(out.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).count(), 6);
    let ising = ok(&["gen-hamiltonian", "--model", "tfim", "--qubits", "4", "--periodic"]);
    assert_eq!(ising.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).count(), 8);
}

#[test]
fn fixed_sic_gives_single_record() {
    let dir = TempDir::new().unwrap();
    let obs = hamiltonian(dir.path());
    let run = dir.path().join("sic");
    ok(&["run", "--obs", p(&obs), "--method", "sic1", "--shots", "5000", "--seed", "3", "--out", p(&run)]);
    assert_eq!(trace_lines(&run, 3).len(), 2);
    for f in ["config.json", "summary.json", "observable.txt", "circuit.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
}

#[test]
fn adaptive_stops_at_target_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let obs = hamiltonian(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for run in [&a, &b] {
        ok(&[
            "run", "--obs", p(&obs), "--method", "adaptive-1", "--shots", "200000", "--target-error", "0.02", "--seed", "1",
            "--out", p(run),
        ]);
    }
    let result = fs::read_to_string(a.join("seed-1").join("result.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&result).unwrap();
    assert_eq!(v["stop_reason"], "target_error");
    assert!(v["estimated_error"].as_f64().unwrap() <= 0.02);
    assert_eq!(fs::read(a.join("seed-1/trace.csv")).unwrap(), fs::read(b.join("seed-1/trace.csv")).unwrap());
}

#[test]
fn tomography_on_stored_batches() {
    let dir = TempDir::new().unwrap();
    let obs = hamiltonian(dir.path());
    let run = dir.path().join("run");
    ok(&["run", "--obs", p(&obs), "--method", "adaptive-1", "--shots", "8000", "--seed", "0", "--out", p(&run)]);
    let first = ok(&["tomography", "--run", p(&run), "--k", "1"]);
    let report = fs::read_to_string(run.join("tomography/report.txt")).unwrap();
    assert_eq!(ok(&["tomography", "--run", p(&run), "--k", "1"]), first);
    assert_eq!(fs::read_to_string(run.join("tomography/report.txt")).unwrap(), report);
    assert_eq!(report.lines().filter(|l| l.starts_with("subset ")).count(), 3);
    assert!(first.lines().nth(1).unwrap().starts_with("1,3,3,"));

    let out = apovm(&["tomography", "--run", p(&run), "--k", "4"]);
    assert!(!out.status.success());
}

#[test]
fn tomography_needs_povm_batches() {
    let dir = TempDir::new().unwrap();
    let obs = hamiltonian(dir.path());
    let run = dir.path().join("pauli");
    ok(&["run", "--obs", p(&obs), "--method", "pauli", "--shots", "3000", "--out", p(&run)]);
    let out = apovm(&["tomography", "--run", p(&run), "--k", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn extrapolate_export_and_fit() {
    let dir = TempDir::new().unwrap();
    let obs = hamiltonian(dir.path());
    let run = dir.path().join("run");
    ok(&["run", "--obs", p(&obs), "--method", "adaptive-1", "--shots", "6000", "--seed", "0", "--seed", "1", "--out", p(&run)]);

    let ex = ok(&["extrapolate", "--input", p(&run), "--target", "1e-4"]);
    let rows: Vec<&str> = ex.lines().collect();
    assert_eq!(rows[0], "source,s_target");
    assert!(rows[1].starts_with("seed-0,"));
    assert!(rows[3].starts_with("mean,"));
    let s: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(s > 6000.0);

    let bloch = ok(&["export-bloch", "--input", p(&run.join("seed-0"))]);
    assert!(bloch.starts_with("t,qubit,effect,x,y,z"));
    assert!(bloch.lines().count() > 1 + 3 * 4);

    let pts = dir.path().join("points.csv");
    fs::write(&pts, "n,s\n2,32\n3,108\n4,256\n5,500\n").unwrap();
    let fit: serde_json::Value = serde_json::from_str(&ok(&["fit", "--points", p(&pts), "--bootstrap", "50"])).unwrap();
    assert!((fit["b"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert!((fit["a"].as_f64().unwrap() - 4.0).abs() < 1e-9);
}

#[test]
fn rejects_bad_input() {
    assert!(!apovm(&["run", "--obs", "/nonexistent/obs.txt", "--method", "sic1", "--shots", "100"]).status.success());
    let dir = TempDir::new().unwrap();
    let obs = hamiltonian(dir.path());
    let out = apovm(&["run", "--obs", p(&obs), "--method", "nope", "--shots", "100"]);
    assert!(!out.status.success());
}
