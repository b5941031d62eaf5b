use std::path::Path;
use std::process::{Command, Output};

fn rydsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydsim")).args(args).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("stderr is JSON")
}

#[test]
fn help_lists_both_commands() {
    let out = rydsim(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("simulate") && text.contains("validate"), "{text}");
}

#[test]
fn usage_errors_exit_with_two() {
    let out = rydsim(&["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn bad_configuration_is_reported_as_json() {
    let out = rydsim(&["simulate", "--set", "n_atoms=-3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
    let out = rydsim(&["simulate", "--figure", "9z"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_passes_and_fails_on_tolerance() {
    let base = ["validate", "--against-oracle", "--n", "5", "--superatoms", "5", "--set", "area_points=8"];
    let out = rydsim(&base);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["max_deviation"].as_f64().unwrap() < 1e-8);
    assert_eq!(report["pass"], true);

    // Two units for five interacting atoms cannot be exact.
    let out = rydsim(&["validate", "--against-oracle", "--n", "5", "--superatoms", "2", "--tolerance", "1e-12"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "tolerance_exceeded");
}

#[test]
fn oracle_size_is_limited() {
    let out = rydsim(&["validate", "--against-oracle", "--n", "30"]);
    assert_eq!(out.status.code(), Some(2));
}

fn run_simulate(dir: &Path) -> Output {
    let config = dir.join("run.toml");
    std::fs::write(&config, "n_atoms = 6\nradius_um = 2.0\nscaled_strength = 10.0\nsuperatoms = 3\nmax_excited = 3\nrealizations = 2\n").unwrap();
    rydsim(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "areas=[0.5, 1.0, 2.0]",
        "--seed",
        "7",
        "--workers",
        "1",
        "--out",
        dir.join("out").to_str().unwrap(),
    ])
}

#[test]
fn simulate_writes_reproducible_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = run_simulate(a.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["completed"], 2);
    assert_eq!(report["files"].as_array().unwrap().len(), 3);
    assert!(run_simulate(b.path()).status.success());
    for f in ["curves.csv", "correlation.csv"] {
        let x = std::fs::read(a.path().join("out").join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join("out").join(f)).unwrap(), "{f}");
    }
    // Summaries differ only in the recorded output directory.
    let summary = |d: &Path| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("out/summary.json")).unwrap()).unwrap();
        v["config"]["output_dir"] = serde_json::Value::Null;
        v
    };
    assert_eq!(summary(a.path()), summary(b.path()));
    assert_eq!(summary(a.path())["seed"], 7);
    let curves = std::fs::read_to_string(a.path().join("out/curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 4);
}
