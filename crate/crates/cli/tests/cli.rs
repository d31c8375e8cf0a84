use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qdist(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdist")).current_dir(dir).args(args).output().expect("spawn qdist")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = qdist(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small circuit and network files in a fresh directory.
fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate-circuit", "--qubits", "8", "--gates-per-qubit", "8", "--seed", "4", "--out", "c.json"]);
    ok(d, &["generate-network", "--nodes", "4", "--memories", "8", "--seed", "4", "--out", "n.json"]);
    dir
}

#[test]
fn generators_are_seeded() {
    let dir = setup();
    let d = dir.path();
    let again = ok(d, &["generate-circuit", "--qubits", "8", "--gates-per-qubit", "8", "--seed", "4"]);
    assert_eq!(serde_json::from_str::<Value>(&again).unwrap(), json(&d.join("c.json")));
    let other = ok(d, &["generate-circuit", "--qubits", "8", "--gates-per-qubit", "8", "--seed", "5"]);
    assert_ne!(serde_json::from_str::<Value>(&other).unwrap(), json(&d.join("c.json")));
    assert_eq!(json(&d.join("c.json"))["num_qubits"], 8);
}

#[test]
fn benchmark_circuit() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["generate-circuit", "--benchmark", "ghz", "--qubits", "5"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["num_qubits"], 5);
}

#[test]
fn allocation_round_trips_through_schedule() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["allocate", "--circuit", "c.json", "--network", "n.json", "--out", "a.json"]);
    let alloc = json(&d.join("a.json"));
    assert_eq!(alloc["placements"].as_array().unwrap().len(), 8);
    assert!(alloc["cost"].as_f64().unwrap() >= 0.0);
    for algorithm in ["Greedy-TG", "DP-TG", "Greedy-CE", "DP-CE", "Disjoint-Paths"] {
        let out = ok(
            d,
            &[
                "schedule",
                "--circuit",
                "c.json",
                "--network",
                "n.json",
                "--allocation",
                "a.json",
                "--algorithm",
                algorithm,
            ],
        );
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["algorithm"], algorithm);
        assert!(v["analytic_total"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn simulate_writes_trace() {
    let dir = setup();
    let d = dir.path();
    let out = ok(d, &["simulate", "--circuit", "c.json", "--network", "n.json", "--trials", "3", "--trace", "t.csv"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["result"]["totals"].as_array().unwrap().len(), 3);
    assert!(v["result"]["traces"].is_null());
    let trace = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(trace.starts_with("trial,time,kind,subject,outcome\n"));
    assert!(trace.lines().count() > 1);
}

#[test]
fn experiment_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp.toml"),
        r#"
seeds = [1, 2]
trials = 2
algorithms = ["DP-CE", "Disjoint-Paths"]

[circuit]
kind = "random"
num_qubits = 8
gates_per_qubit = 6

[network]
num_nodes = 4

[sweep]
variable = "tau"
values = [1.0, 2.0]
"#,
    )
    .unwrap();
    ok(d, &["experiment", "--config", "exp.toml", "--out", "rows.csv", "--plot", "plot.csv"]);
    let rows = std::fs::read_to_string(d.join("rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 2);
    let plot = std::fs::read_to_string(d.join("plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 2 * 2);
}

#[test]
fn errors_exit_nonzero() {
    let dir = setup();
    let d = dir.path();
    let bad = qdist(d, &["schedule", "--circuit", "c.json", "--network", "n.json", "--algorithm", "nope"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nope"));
    let missing = qdist(d, &["allocate", "--circuit", "missing.json", "--network", "n.json"]);
    assert!(!missing.status.success());
    std::fs::write(d.join("bad.toml"), "unknown_key = 1\n").unwrap();
    assert!(!qdist(d, &["experiment", "--config", "bad.toml"]).status.success());
}
