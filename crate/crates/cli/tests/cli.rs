use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn slowfast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowfast"))
        .args(args)
        .env_remove("SLOWFAST_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn manifest_hash(dir: &Path) -> String {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["config_hash"].as_str().unwrap().to_string()
}

const SMALL: [&str; 8] = ["--modes", "8", "--dt", "5e-4", "--horizon", "0.2", "--mc", "4"];

#[test]
fn selfcheck_passes() {
    let o = slowfast(&["selfcheck"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("10 passed, 0 failed"));
    assert!(!stdout(&o).contains("[FAIL]"));
}

#[test]
fn default_delta_is_root_epsilon() {
    let o = slowfast(&["sweep", "--dump"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("delta = ")).unwrap();
    let delta: f64 = line["delta = ".len()..].parse().unwrap();
    assert!((delta - 0.3162).abs() < 1e-9, "{line}");
    assert!(text.contains("horizon = 1.0"));
}

#[test]
fn epsilon_must_lie_in_unit_interval() {
    let o = slowfast(&["simulate", "--epsilon", "1.5", "--dump"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("epsilon must lie in (0, 1)"), "{}", stderr(&o));
}

#[test]
fn delta_alignment() {
    let ok = slowfast(&["simulate", "--dt", "0.01", "--delta", "0.05", "--dump"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(stdout(&ok).contains("delta = 0.05\n"));
    let bad = slowfast(&["simulate", "--dt", "0.01", "--delta", "0.055", "--dump"]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("whole multiple"), "{}", stderr(&bad));
}

#[test]
fn unknown_example_is_a_validation_error() {
    let o = slowfast(&["simulate", "--example", "navier_stokes", "--dump"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown example"));
}

#[test]
fn parse_errors_carry_the_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "example = \"heat\"\n[simulation]\ndt = 0.001\nmodes = 8\n");
    let o = slowfast(&["simulate", "--config", &cfg, "--dump"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("line 4") && err.contains("modes"), "{err}");
}

#[test]
fn small_sweep_warns_and_succeeds() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a");
    let mut args = vec![
        "sweep",
        "--epsilon",
        "0.1,0.01",
        "--threads",
        "2",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(SMALL);
    let o = slowfast(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(
        stderr(&o).contains("warning: only 4 Monte Carlo paths"),
        "{}",
        stderr(&o)
    );
    assert!(out.join("manifest.json").exists());
    assert!(!out.join("manifest.json.partial").exists());

    let hash = manifest_hash(&out);
    let csv = fs::read_to_string(out.join("errors.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epsilon,p,estimate,stderr,M_effective,exclusions,runtime_s,config_hash"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ends_with(&hash)));
    assert!(fs::read_to_string(out.join("errors.svg")).unwrap().contains(&hash));
    assert!(fs::read_to_string(out.join("assumptions.csv")).unwrap().contains(&hash));
}

/// Identical settings give identical CSVs apart from the runtime column,
/// whatever the thread count.
#[test]
fn sweep_csv_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(6);
                f.join(",")
            })
            .collect()
    };
    let mut results = Vec::new();
    for (name, threads) in [("one", "1"), ("three", "3")] {
        let out = dir.path().join(name);
        let mut args = vec![
            "sweep",
            "--epsilon",
            "0.1,0.01",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend(SMALL);
        assert_eq!(code(&slowfast(&args)), 0);
        results.push(strip(&out.join("errors.csv")));
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn huge_step_blows_up_with_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "[simulation]\ndt = 0.1\nn_modes = 64\nseed = 777\n\n[initial]\nx0 = 1e5\n",
    );
    let out = dir.path().join("out");
    let o = slowfast(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("blow-up") && err.contains("seed 777"), "{err}");
    assert!(out.join("manifest.json.partial").exists());
    assert!(!out.join("manifest.json").exists());
    assert!(!out.join("slow.csv").exists());
}

#[test]
fn failed_assumption_is_fatal_unless_forced() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[lipschitz]\nf2 = 30.0\n");
    let out = dir.path().join("out");
    let mut args = vec!["simulate", "--config", &cfg, "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let o = slowfast(&args);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("(A3)"), "{}", stderr(&o));
    assert!(!out.exists());

    args.push("--force");
    let o = slowfast(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: assumption (A3) violated"));
    assert!(out.join("slow.csv").exists());
}

#[test]
fn simulate_writes_hashed_trajectories() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["simulate", "--stride", "50", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let o = slowfast(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let hash = manifest_hash(&out);
    for name in ["slow.csv", "fast.csv", "averaged.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# config_hash={hash}"));
        assert!(lines[1].starts_with("t,c1,c2"));
        assert_eq!(lines.len(), 2 + 9, "{name}");
    }
}

#[test]
fn uncoupled_auxiliary_gap_is_zero() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let mut args = vec![
        "diagnose",
        "auxiliary",
        "--epsilon",
        "0.01",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(SMALL);
    let o = slowfast(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("identically zero"));
    assert!(fs::read_to_string(out.join("auxiliary.csv"))
        .unwrap()
        .contains(&manifest_hash(&out)));
}

#[test]
fn drift_estimate_is_written() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[averaging]\nburn_in = 1.0\nhorizon = 21.0\ndt = 0.01\n");
    let out = dir.path().join("out");
    let o = slowfast(&[
        "drift",
        "--modes",
        "8",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("drift.csv")).unwrap();
    assert!(text.starts_with(&format!("# config_hash={}", manifest_hash(&out))));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 8);
}

#[test]
fn help_exits_cleanly() {
    let o = slowfast(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("selfcheck"));
}
