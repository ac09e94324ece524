use std::path::Path;
use std::process::{Command, Output};

fn awpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_awpinn")).args(args).env("AWPINN_WORKERS", "1").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: [&str; 8] = [
    "--set",
    "train.adam_iterations=20",
    "--set",
    "train.lbfgs.max_iterations=5",
    "--set",
    "points.residual=200",
    "--set",
    "points.test=[11, 11]",
];

#[test]
fn check_groups_pass() {
    let o = awpinn(&["check", "--group", "exponent", "--group", "optimizer"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().count() >= 5);
    assert!(out.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn unknown_check_group_is_a_usage_error() {
    assert_eq!(awpinn(&["check", "--group", "nope"]).status.code(), Some(2));
}

#[test]
fn unknown_preset_and_bad_override_exit_2() {
    let o = awpinn(&["solve", "--preset", "heat-0.13"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown preset"));
    let o = awpinn(&["solve", "--preset", "heat-0.12", "--set", "train.no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["solve", "--preset", "heat-0.12", "--seed", "3", "--output", out];
    args.extend(TINY);
    let o = awpinn(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("rel. L2 u"));
    let seed = dir.path().join("seed-3");
    for f in ["manifest.json", "training_log.csv", "prediction.csv", "model.txt", "active_set.json"] {
        assert!(seed.join(f).is_file(), "missing {f}");
    }
    let manifest = seed.join("manifest.json");
    let o = awpinn(&["bench", "--rerun", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim_end().ends_with("identical"));
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["bench", "--presets", "heat-0.12", "--repeats", "2", "--output", dir.path().to_str().unwrap()];
    args.extend(TINY);
    let o = awpinn(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("heat-0.12 (2 repeats)"));
    let base = dir.path().join("heat-0.12");
    for f in ["config.toml", "repeats.csv", "report.json"] {
        assert!(base.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(base.join("repeats.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn select_prints_active_set_json() {
    let mut args = vec!["select", "--preset", "heat-0.12"];
    args.extend(TINY);
    let o = awpinn(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.get("active").is_some());
}

#[test]
fn ntk_reports_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["ntk", "--preset", "heat-0.12", "--points", "30", "--output", dir.path().to_str().unwrap()];
    args.extend(TINY);
    let o = awpinn(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("eigenvalues"));
    let csv = std::fs::read_to_string(dir.path().join("eigenvalues.csv")).unwrap();
    let vals: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[0] >= w[1]));
}

fn read_columns(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn fdtd_writes_reference_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let o = awpinn(&[
        "fdtd", "--dx", "0.02", "--dy", "0.02", "--dt", "0.01", "--final-time", "0.2", "--sigma", "0.05", "--lattice", "5,5,3",
        "--output", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("50 x 50 cells, 20 steps"));
    let rows = read_columns(&dir.path().join("reference.csv"));
    assert_eq!(rows.len(), 75);
    assert!(rows.iter().all(|r| r.len() == 6 && r.iter().all(|v| v.is_finite())));
    for f in ["Ex", "Ey", "Hz"] {
        assert!(dir.path().join(format!("snapshot_{f}.csv")).is_file());
    }
}

#[test]
fn fdtd_rejects_unstable_step() {
    let o = awpinn(&["fdtd", "--dx", "0.02", "--dy", "0.02", "--dt", "0.05", "--final-time", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
}
