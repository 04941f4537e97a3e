use std::path::Path;
use std::process::{Command, Output};

fn twoscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoscale"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config_path(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .display()
        .to_string()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn reference_schedules_validate() {
    let out = twoscale(&[
        "validate-schedule",
        "--config",
        &config_path("reference_schedules.json"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.matches("pass").count(), 6, "{table}");
    assert!(!table.contains("FAIL"));
}

#[test]
fn equal_steps_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "equal.json",
        r#"{"schedules": {"fast": {"kind": "power_law", "scale": 0.9, "exponent": 0.6},
                          "slow": {"kind": "power_law", "scale": 0.9, "exponent": 0.6}},
            "validation": {"horizon": 10000}}"#,
    );
    let out = twoscale(&["validate-schedule", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"fluct": {"anchors": [1000], "windw": 4.0}}"#,
    );
    let out = twoscale(&["fluct", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("fluct.windw"), "{err}");
}

#[test]
fn malformed_and_missing_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "broken.json", "{\"problem\": ");
    assert_eq!(
        twoscale(&["simulate", "--config", &cfg]).status.code(),
        Some(2)
    );
    let cfg = write_config(dir.path(), "name.json", r#"{"problem": "P7"}"#);
    assert_eq!(
        twoscale(&["simulate", "--config", &cfg]).status.code(),
        Some(2)
    );
    let missing = dir.path().join("absent.json").display().to_string();
    assert_eq!(
        twoscale(&["simulate", "--config", &missing]).status.code(),
        Some(2)
    );
}

#[test]
fn ou_limit_covariance_final_row() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let out = twoscale(&[
        "limit-cov",
        "--config",
        &config_path("ou_limit_cov.json"),
        "--out",
        &out_dir,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("covariance.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,row,col,value"));
    let last = csv.lines().last().unwrap();
    let fields: Vec<f64> = last.split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(fields[0], 1.0);
    assert!((fields[3] - 0.432332).abs() < 1e-6, "{last}");
}

#[test]
fn divergence_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "unstable.json",
        r#"{"problem": "P1", "noise": {"fast": 1e40}, "engine": {"n_end": 100}}"#,
    );
    let out = twoscale(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        &dir.path().display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("diverged"));
}

#[test]
fn selftest_passes() {
    let out = twoscale(&["selftest"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
}

#[test]
fn reruns_reproduce_outputs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let cfg = config_path("p2_simulate.json");
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    let runs: Vec<(Vec<u8>, Vec<u8>)> = ["1", "3"]
        .iter()
        .map(|threads| {
            let out = twoscale(&[
                "simulate",
                "--config",
                &cfg,
                "--out",
                &out_dir,
                "--threads",
                threads,
            ]);
            assert_eq!(out.status.code(), Some(0));
            (read("trajectories_0.csv"), read("trajectories_1.csv"))
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_ne!(runs[0].0, runs[0].1);

    let reseeded = twoscale(&[
        "simulate", "--config", &cfg, "--out", &out_dir, "--seed", "12",
    ]);
    assert_eq!(reseeded.status.code(), Some(0));
    assert_ne!(read("trajectories_0.csv"), runs[0].0);
}

#[test]
fn trajectory_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = twoscale(&[
        "simulate",
        "--config",
        &config_path("p2_simulate.json"),
        "--out",
        &dir.path().display().to_string(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("trajectories_0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,component,value"));
    assert_eq!(lines.next(), Some("0,x0,0.5"));
    assert_eq!(lines.next(), Some("0,y0,1"));
    assert_eq!(lines.next(), Some("0,state,0"));
    assert!(lines.next().unwrap().starts_with("0,mf0,"));
}
