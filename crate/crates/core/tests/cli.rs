//! The `gnep` binary: outputs, exit codes and manifests.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn gnep(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnep"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn assert_manifest(out: &Path, subcommand: &str, code: i32) {
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["subcommand"], subcommand);
    assert_eq!(m["exit_code"], code);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    for f in m["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).is_file(), "{f} missing");
    }
}

#[test]
fn solve_1d_prints_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = gnep(dir.path(), &["solve-1d", "--a2", "1", "--a3", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("1.312500000"), "{stdout}");
    for key in ["x ", "v ", "sigma ", "costs "] {
        assert!(stdout.contains(key));
    }
    assert_manifest(dir.path(), "solve-1d", 0);
}

#[test]
fn nonpositive_factor_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gnep(dir.path(), &["solve-1d", "--a2", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("must be positive"));
    assert_manifest(dir.path(), "solve-1d", 1);
}

#[test]
fn bad_flags_exit_one_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = gnep(dir.path(), &["solve-1d", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("Usage"));
    let o = gnep(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn straight_sweep_writes_rows_and_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("straight.json");
    let o = gnep(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--alphas", "0.05:20:15"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(header, ["alpha", "J1", "J2", "converged", "jump_flag"]);
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| r[3] == "true" && r[4] == "false"));
    let (header, rows) = read_csv(&dir.path().join("trajectories/alpha_000.csv"));
    assert_eq!(header, ["player", "k", "v", "psi", "s", "t", "X", "Y", "u_a", "u_delta"]);
    assert_eq!(rows.len(), 2 * 11);
    assert_manifest(dir.path(), "sweep", 0);
    assert_eq!(json(&dir.path().join("manifest.json"))["files"].as_array().unwrap().len(), 17);
}

#[test]
fn curved_sweep_flags_a_jump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("curved.json");
    let o = gnep(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--alphas", "0.01:100:25"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().any(|r| r[4] == "true"));
}

#[test]
fn sweep_input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("straight.json");
    assert_eq!(gnep(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--alphas", ""]).status.code(), Some(1));
    assert_eq!(gnep(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--alphas", "2,1"]).status.code(), Some(1));
    let o = gnep(dir.path(), &["sweep", "--config", "/no/such/config.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("cannot load config"));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"track": {"half_width": 0.5, "segments": []}, "extra": 1}"#).unwrap();
    assert_eq!(gnep(dir.path(), &["sweep", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn mc_needs_at_least_one_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("l_track.json");
    assert_eq!(gnep(dir.path(), &["mc", "--config", cfg.to_str().unwrap(), "--n", "0"]).status.code(), Some(1));
}

#[test]
fn mc_outputs_do_not_depend_on_job_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config("l_track.json");
    let args = ["--seed", "5", "mc", "--config", cfg.to_str().unwrap(), "--n", "2", "--duration", "0.5"];
    let oa = gnep(a.path(), &[&["--jobs", "1"], &args[..]].concat());
    let ob = gnep(b.path(), &[&["--jobs", "2"], &args[..]].concat());
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(ob.status.code(), Some(0));
    for f in ["mc_report.json", "mc_runs.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
    let (header, rows) = read_csv(&a.path().join("mc_runs.csv"));
    assert_eq!(header.len(), 15);
    assert!(rows.iter().all(|r| r.len() == 15));
    let report = json(&a.path().join("mc_report.json"));
    assert_eq!(report["seed"], 5);
    assert_eq!(report["racing"]["d_safe"], 0.4);
}

#[test]
fn race_regression_scenario() {
    // Ego 1.6 m behind with +0.5 m/s on the L-track, outcome fixed from a verified run.
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("l_track.json");
    let o = gnep(dir.path(), &["race", "--config", cfg.to_str().unwrap(), "--ego-alpha", "0.05"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&dir.path().join("race.json"));
    assert_eq!(r["steps"], 20);
    assert_eq!(r["collision"], false);
    assert!(r["failure"].is_null());
    assert_eq!(r["winner"], "opponent");
    let (s_opp, s_ego) = (r["final_s"][0].as_f64().unwrap(), r["final_s"][1].as_f64().unwrap());
    assert!((s_opp - 8.1994).abs() < 1e-3 && (s_ego - 7.1242).abs() < 1e-3, "{s_opp} {s_ego}");
    let (_, rows) = read_csv(&dir.path().join("race_trajectory.csv"));
    assert_eq!(rows.len(), 2 * 21);
    assert_manifest(dir.path(), "race", 0);
}

#[test]
fn solver_failure_mid_race_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("l_track.json")).unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
    cfg["start"] = serde_json::json!([{ "s": 5.0, "t": 0.0, "v": 1.5 }, { "s": 3.4, "t": 0.0, "v": 2.0 }]);
    let path = dir.path().join("hard.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = gnep(&dir.path().join("out"), &["race", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let r = json(&dir.path().join("out/race.json"));
    assert!(!r["failure"].is_null());
    assert_manifest(&dir.path().join("out"), "race", 2);
}
