use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use frem_cli::io::{read_batch, read_simulation_rows, write_batch, SIMULATION_HEADER};
use frem_cli::model::{ModelFile, ReportFile};
use frem_cli::CliError;
use frem_core::synthetic::BiasedTask;
use frem_core::{Matrix, SampleBatch};
use tempfile::TempDir;

fn frem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_file(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn small_task(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("task.csv");
    let out = frem(&["generate", "--n", "300", "--d", "3", "--seed", "5", "--out", path_str(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = TempDir::new().unwrap();
    let batch = BiasedTask {
        n: 40,
        d: 4,
        correlation: 0.3,
    }
    .generate(9)
    .unwrap();
    let path = dir.path().join("b.csv");
    write_batch(&path, &batch).unwrap();
    assert_eq!(read_batch(&path).unwrap(), batch);
}

#[test]
fn columns_may_come_in_any_order_and_labels_are_optional() {
    let dir = TempDir::new().unwrap();
    let path = write_file(&dir, "b.csv", "s,x1,x0\n0.5,2,1\n1.5,4,3\n");
    let batch = read_batch(&path).unwrap();
    let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
    assert_eq!(batch, SampleBatch::new(x, vec![0.5, 1.5], None).unwrap());
}

#[test]
fn missing_sensitive_column_is_reported() {
    let dir = TempDir::new().unwrap();
    let path = write_file(&dir, "b.csv", "x0,y\n1,0\n2,1\n");
    let err = read_batch(&path).unwrap_err();
    assert!(matches!(err, CliError::Parse { .. }));
    assert!(err.to_string().contains("`s`"), "{err}");
}

#[test]
fn bad_cells_are_located() {
    let dir = TempDir::new().unwrap();
    let path = write_file(&dir, "b.csv", "x0,s,y\n1,0.1,0\n2,NaN,1\n");
    let msg = read_batch(&path).unwrap_err().to_string();
    assert!(msg.contains("data row 2") && msg.contains("column 2") && msg.contains("NaN"), "{msg}");

    let path = write_file(&dir, "c.csv", "x0,s\n1,0.1\n2,abc\n");
    assert!(read_batch(&path).unwrap_err().to_string().contains("`abc`"));

    let path = write_file(&dir, "d.csv", "x0,x2,s\n1,2,3\n");
    assert!(read_batch(&path).unwrap_err().to_string().contains("x1 is missing"));

    let path = write_file(&dir, "e.csv", "x0,s,s\n1,2,3\n");
    assert!(read_batch(&path).is_err());
}

#[test]
fn missing_data_file_exits_with_usage_code() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = frem(&[
        "train",
        "--data",
        path_str(&missing),
        "--out-model",
        path_str(&dir.path().join("m.json")),
        "--out-report",
        path_str(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn malformed_data_exits_with_code_one() {
    let dir = TempDir::new().unwrap();
    let data = write_file(&dir, "b.csv", "x0,s,y\n1,0.1,0\n2,inf,1\n");
    let out = frem(&[
        "train",
        "--data",
        path_str(&data),
        "--out-model",
        path_str(&dir.path().join("m.json")),
        "--out-report",
        path_str(&dir.path().join("r.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_a_parseable_table() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("sim.csv");
    let out = frem(&[
        "simulate",
        "--design",
        "1d",
        "--n",
        "50,80",
        "--reps",
        "3",
        "--estimator",
        "proposed,binning,nw",
        "--gamma",
        "0.5,0.7",
        "--bins",
        "2",
        "--draws",
        "50",
        "--truth-samples",
        "2000",
        "--out",
        path_str(&out_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), SIMULATION_HEADER.join(","));
    let rows = read_simulation_rows(&out_path).unwrap();
    assert_eq!(rows.len(), 2 * 5);
    assert!(rows.iter().all(|r| r.design == "1d" && r.m == 1 && r.reps == 3));
    assert!(rows.iter().all(|r| r.rmse >= r.mae && r.mae >= r.bias.abs()));
    assert_eq!(rows.iter().filter(|r| r.estimator == "nw").count(), 4);
}

#[test]
fn simulate_is_deterministic_for_a_seed() {
    let args = [
        "simulate",
        "--design",
        "multi",
        "--m",
        "3",
        "--n",
        "40",
        "--reps",
        "4",
        "--estimator",
        "proposed",
        "--gamma",
        "0.5",
        "--truth-samples",
        "1000",
        "--seed",
        "7",
    ];
    let (a, b) = (frem(&args), frem(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_rejects_bad_flag_combinations() {
    let cases: [&[&str]; 5] = [
        &["simulate", "--design", "1d", "--n", "100", "--reps", "0", "--estimator", "proposed", "--gamma", "0.5"],
        &["simulate", "--design", "multi", "--w1", "0.5", "--n", "100", "--estimator", "binning", "--bins", "2"],
        &["simulate", "--design", "1d", "--m", "3", "--n", "100", "--estimator", "binning", "--bins", "2"],
        &["simulate", "--design", "1d", "--n", "100", "--estimator", "proposed"],
        &["simulate", "--design", "1d", "--n", "100", "--estimator", "proposed", "--gamma", "-1"],
    ];
    for args in cases {
        let out = frem(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn audit_reproduces_the_training_report() {
    let dir = TempDir::new().unwrap();
    let data = small_task(&dir);
    let (model, report, audit) = (dir.path().join("m.json"), dir.path().join("r.json"), dir.path().join("a.json"));
    let out = frem(&[
        "train",
        "--data",
        path_str(&data),
        "--lambda",
        "1",
        "--epochs",
        "3",
        "--batch",
        "64",
        "--hidden",
        "8",
        "--representation",
        "4",
        "--seed",
        "11",
        "--out-model",
        path_str(&model),
        "--out-report",
        path_str(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = frem(&["audit", "--model", path_str(&model), "--data", path_str(&data), "--out-report", path_str(&audit)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(&audit).unwrap());

    let parsed: ReportFile = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(parsed.seed, 11);
    assert!(parsed.acc.is_some() && parsed.mse.is_none() && parsed.geo.is_some());
    let stored: ModelFile = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    assert_eq!(stored.network().unwrap().param_count(), 3 * 8 + 8 + 8 * 4 + 4 + 4 + 1);
}

#[test]
fn audit_rejects_a_corrupted_model() {
    let dir = TempDir::new().unwrap();
    let data = small_task(&dir);
    let (model, report) = (dir.path().join("m.json"), dir.path().join("r.json"));
    let out = frem(&[
        "train",
        "--data",
        path_str(&data),
        "--epochs",
        "1",
        "--hidden",
        "4",
        "--representation",
        "2",
        "--out-model",
        path_str(&model),
        "--out-report",
        path_str(&report),
    ]);
    assert!(out.status.success());
    let mut stored: ModelFile = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    stored.head.2.pop();
    std::fs::write(&model, serde_json::to_string(&stored).unwrap()).unwrap();
    let out = frem(&["audit", "--model", path_str(&model), "--data", path_str(&data), "--out-report", path_str(&report)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn regression_training_reports_errors_instead_of_accuracy() {
    let dir = TempDir::new().unwrap();
    let data = write_file(
        &dir,
        "reg.csv",
        &(0..60)
            .map(|i| {
                let t = i as f64 / 60.0;
                format!("{t},{},{}\n", (3.0 * t).sin(), 2.0 * t + 0.1 * (7.0 * t).cos())
            })
            .fold(String::from("x0,s,y\n"), |acc, line| acc + &line),
    );
    let (model, report) = (dir.path().join("m.json"), dir.path().join("r.json"));
    let out = frem(&[
        "train",
        "--data",
        path_str(&data),
        "--task",
        "regression",
        "--lambda",
        "0.5",
        "--epochs",
        "2",
        "--batch",
        "16",
        "--hidden",
        "4",
        "--representation",
        "3",
        "--out-model",
        path_str(&model),
        "--out-report",
        path_str(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: ReportFile = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert!(parsed.acc.is_none() && parsed.mse.is_some() && parsed.mae.is_some());
}

#[test]
fn gradcheck_passes_and_is_deterministic() {
    let a = frem(&["gradcheck", "--seeds", "3"]);
    let b = frem(&["gradcheck", "--seeds", "3"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    for name in ["eipm-gradient-dp", "eipm-gradient-eo", "reg-gdp-penalty", "network-backward"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn gradcheck_catches_an_injected_fault() {
    let out = frem(&["gradcheck", "--seeds", "2", "--inject-fault", "eipm-gradient-eo"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let failing: Vec<&str> = text.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert_eq!(failing.len(), 1);
    assert!(failing[0].starts_with("eipm-gradient-eo"));

    let out = frem(&["gradcheck", "--inject-fault", "no-such-component"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        assert!(frem(&["generate", "--n", "100", "--seed", "3", "--out", path_str(p)]).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let batch = read_batch(&a).unwrap();
    assert_eq!((batch.n(), batch.d()), (100, 5));
}
