//! End-to-end tests of the command-line interface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ocexact"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn list_examples_prints_seven_names() {
    let out = run(&["list-examples"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = stdout.lines().collect();
    assert_eq!(names.len(), 7);
    assert!(names.contains(&"lq-scalar"));
}

#[test]
fn missing_problem_file_exits_2() {
    let out = run(&["solve", "definitely-missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("cannot read problem file"), "{stderr}");
}

#[test]
fn unknown_example_exits_2() {
    let out = run(&["reproduce", "not-an-entry"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_trajectory_csv() {
    let dir = tempdir("solve");
    let src = fixture("scalar_endpoint.json");
    let out = run(&[
        "solve",
        src.to_str().unwrap(),
        "--lambda",
        "4",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("scalar_endpoint-trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x_1,u_1"));
    assert_eq!(csv.lines().count(), 22);
    // The terminal constraint is active at lambda = 4: x(1) = 1.
    let last = csv.lines().last().unwrap();
    let x_final: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((x_final - 1.0).abs() < 1e-3, "{last}");
}

#[test]
fn sweep_on_file_needs_lambda_grid() {
    let src = fixture("scalar_endpoint.json");
    let out = run(&["sweep", src.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_outputs_are_byte_identical_across_runs() {
    let src = fixture("scalar_endpoint.json");
    let dirs = [tempdir("sweep-a"), tempdir("sweep-b")];
    let mut outputs = Vec::new();
    for dir in &dirs {
        let out = run(&[
            "sweep",
            src.to_str().unwrap(),
            "--lambda-grid",
            "0.5:4:2",
            "--seed",
            "7",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(fs::read(dir.join("scalar_endpoint-sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("lambda,Phi,I,terminal_res,state_res,control_res,converged"));
    // Grid 0.5:4:2 expands to 0.5, 1, 2, 4.
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn reproduce_degenerate_entry_passes_and_writes_sweep() {
    let dir = tempdir("reproduce");
    let out = run(&["reproduce", "degenerate-linearization", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(dir.join("degenerate-linearization-sweep.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let lambda: f64 = fields[0].parse().unwrap();
        let residual: f64 = fields[3].parse().unwrap();
        if lambda >= 1.0 {
            assert!(residual <= 1e-6, "lambda {lambda}: residual {residual}");
        }
    }
}

#[test]
fn diagnose_example_emits_json() {
    let dir = tempdir("diagnose");
    let out = run(&[
        "diagnose",
        "example:lq-scalar",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = fs::read_to_string(dir.join("lq-scalar-diagnostics.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(value["gramian"]["controllable"], serde_json::Value::Bool(true));
    assert!(value["lipschitz_estimate"].is_number());
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ocexact-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}
