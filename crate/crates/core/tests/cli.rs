//! Black-box checks of the command-line interface: argument handling,
//! exit codes, output layout, and the determinism contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bhshock"))
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn profile_at_origin_prints_the_known_jet() {
    let out = bin().args(["profile", "--i", "2", "--at", "0"]).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(vals.len(), 7);
    assert!(vals[1].abs() < 1e-15, "value {}", vals[1]);
    assert!((vals[2] + 1.0).abs() < 1e-12, "first derivative {}", vals[2]);
    assert!((vals[6] - 120.0).abs() < 1e-9, "fifth derivative {}", vals[6]);
}

#[test]
fn profile_left_of_origin_is_positive_one() {
    let out = bin()
        .args(["profile", "--i", "2", "--at", "-2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let row = stdout(&out).lines().nth(1).unwrap().to_string();
    let u: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((u - 1.0).abs() < 1e-12, "U(-2) = {u}");
}

#[test]
fn profile_without_family_index_is_a_usage_error() {
    let out = bin().arg("profile").output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn hilbert_test_passes() {
    let out = bin().arg("hilbert-test").output().unwrap();
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(stdout(&out).matches(": pass").count(), 4);
}

#[test]
fn unknown_config_key_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[evolve]\ncfll = 0.3\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cfll"), "{}", stderr(&out));
}

fn write_sim_config(path: &Path) {
    fs::write(
        path,
        r#"
[grid]
points = 4096
half_width = 2.0

[init]
epsilon = 0.1

[evolve]
stop_slope = 40.0
t_max = 0.2
output_every = 8

[diagnostics]
holder_radii = [1e-3, 1e-1]
"#,
    )
    .unwrap();
}

#[test]
fn simulate_writes_trajectory_report_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    write_sim_config(&cfg);
    let out_dir = dir.path().join("run");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    for f in [
        "report.json",
        "modulation.json",
        "config.resolved.json",
        "plots/profile_error.csv",
        "plots/cusp.csv",
        "plots/d2_origin.csv",
        "plots/d3_origin.csv",
    ] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    // the report embeds the resolved config and the headline fields
    assert!(report.get("config").is_some());
    let r = report.get("report").unwrap();
    for k in ["t_star", "holder_exponent", "nu_estimate", "bootstrap_verdicts"] {
        assert!(r.get(k).is_some(), "report missing {k}");
    }

    // diagnose over the stored trajectory reproduces the report exactly
    let rediag = dir.path().join("rediag.json");
    let out2 = bin()
        .args(["diagnose", "--config"])
        .arg(&cfg)
        .arg("--traj")
        .arg(&out_dir)
        .arg("--out")
        .arg(&rediag)
        .output()
        .unwrap();
    assert!(out2.status.success(), "{}", stderr(&out2));
    let again: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&rediag).unwrap()).unwrap();
    assert_eq!(report.get("report"), again.get("report"));

    // the report subcommand prints the headline numbers
    let out3 = bin()
        .args(["report", "--path"])
        .arg(out_dir.join("report.json"))
        .output()
        .unwrap();
    assert!(out3.status.success());
    assert!(stdout(&out3).contains("t_star"));
}

#[test]
fn environment_override_lands_in_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    write_sim_config(&cfg);
    let out_dir = dir.path().join("run");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .env("BHSHOCK_EVOLVE__STOP_SLOPE", "35.0")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let resolved: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out_dir.join("config.resolved.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(
        resolved["evolve"]["stop_slope"].as_f64().unwrap(),
        35.0
    );
}

fn write_shoot_config(path: &Path) {
    fs::write(
        path,
        r#"
[shoot]
grid_points = 2048
n_checkpoints = 1

[shoot.init]
uhat_family = "small_bump"
uhat_amplitude = 0.02
"#,
    )
    .unwrap();
}

#[test]
fn shoot_trace_is_deterministic_and_seeded_from_the_datum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("shoot.toml");
    write_shoot_config(&cfg);
    let run = |out_dir: &Path| {
        let out = bin()
            .args(["shoot", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read_to_string(out_dir.join("trace.jsonl")).unwrap()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b, "identical config must give a bit-identical trace");

    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/trace.json")).unwrap())
            .unwrap();
    for c in trace["checkpoints"].as_array().unwrap() {
        assert!(c["det"].as_f64().unwrap() > 0.0, "determinant not positive");
    }
}
