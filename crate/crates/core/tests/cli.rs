use std::process::Command;

use cyfam::cli::{dump_config_schema, ScenarioConfig};
use serde_json::Value;

fn cyfam(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cyfam")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn report(dir: &std::path::Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn elliptic_at_i_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = cyfam(&["run", "elliptic", "--at", "i", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    let r = report(dir.path());
    assert_eq!(r["pass"], true);
    let curv = &r["points"][0]["curvature"];
    assert!((curv["wp"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert!((curv["theta_ss"].as_f64().unwrap() - 0.25).abs() < 1e-6);
    assert!(dir.path().join("grids/point0/eigenvalues.csv").exists());
}

#[test]
fn constant_family_is_flagged_non_effective() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = cyfam(&["run", "constant", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("non-effective"));
    assert_eq!(report(dir.path())["points"][0]["global_form"]["effective"], false);
}

#[test]
fn broken_normalization_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) =
        cyfam(&["run", "elliptic", "--break-normalization", "0.1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stdout.contains("eq3"));
    assert_eq!(report(dir.path())["pass"], false);
}

#[test]
fn configuration_errors_exit_two() {
    assert_eq!(cyfam(&["run", "nosuch"]).0, 2);
    assert_eq!(cyfam(&["run", "elliptic", "--tol", "bogus=1"]).0, 2);
    assert_eq!(cyfam(&["run", "elliptic", "--tol", "eq1=-1"]).0, 2);
    assert_eq!(cyfam(&["run", "siegel-e", "--at", "i"]).0, 2);
    assert_eq!(cyfam(&["run", "elliptic", "--grid", "7"]).0, 2);
    assert_eq!(cyfam(&["frobnicate"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "family = \"elliptic\"\nstpe = 0.1\n").unwrap();
    assert_eq!(cyfam(&["run", "--config", bad.to_str().unwrap()]).0, 2);
}

#[test]
fn presets_and_schema() {
    let (code, stdout, _) = cyfam(&["list-presets"]);
    assert_eq!(code, 0);
    for name in ["elliptic", "siegel-e", "constant", "product"] {
        assert!(stdout.contains(name));
    }
    let (code, schema, _) = cyfam(&["schema"]);
    assert_eq!(code, 0);
    assert_eq!(schema, dump_config_schema());
    assert_eq!(ScenarioConfig::from_toml(&schema).unwrap(), ScenarioConfig::default());
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::default();
    cfg.family = cyfam::cli::FamilySpec::Preset("elliptic2i".into());
    cfg.grid = Some(16);
    cfg.tolerances.insert("eq1".into(), 1e-5);
    cfg.out = dir.path().join("out").to_str().unwrap().into();
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let (code, _, _) = cyfam(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let r = report(&dir.path().join("out"));
    assert_eq!(r["config"]["grid"], 16);
    assert!((r["points"][0]["curvature"]["wp"].as_f64().unwrap() - 0.0625).abs() < 1e-12);
}

#[test]
fn reports_are_byte_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let (code, _, _) = cyfam(&["run", "elliptic", "--grid", "16", "--seed", "7", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code, 0);
    }
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    // the output path is part of the echoed config
    let strip = |bytes: Vec<u8>, dir: &std::path::Path| String::from_utf8(bytes).unwrap().replace(dir.to_str().unwrap(), "OUT");
    assert_eq!(strip(ra, a.path()), strip(rb, b.path()));
}

#[test]
fn auxiliary_subcommands() {
    let (code, stdout, _) = cyfam(&["wp", "siegel-e"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert!((v["wp"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(v["eq1"].as_f64().unwrap() < 1e-6);

    let (code, stdout, _) = cyfam(&["green-bound", "--tau", "i", "--grid", "16"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["c"].as_f64().unwrap() > 0.0);

    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let (code, stdout, _) = cyfam(&["solve-ma", "--grid", "16", "--out", trace.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["recovery_error"].as_f64().unwrap() < 1e-8);
    assert!(trace.exists());
}
