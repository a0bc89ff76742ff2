use std::path::Path;
use std::process::{Command, Output};

use cmc_heights::harness::ExperimentConfig;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmc-heights")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

// 1/H for the Euclidean sphere
#[test]
fn sphere_euclidean() {
    let out = cli(&["sphere", "--kappa", "0", "--tau", "0", "--H", "1"]);
    assert!(out.status.success());
    let h: f64 = stdout(&out).trim().parse().unwrap();
    assert!((h - 1.0).abs() < 1e-4);

    let out = cli(&["--json", "sphere", "--kappa", "0", "--tau", "0", "--H", "2"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["hemisphere_height"].as_f64().unwrap() - 0.5).abs() < 1e-4);
}

#[test]
fn cylinder_in_nil_is_unstable() {
    let out = cli(&["cylinder", "--kappa", "0", "--tau", "0.5", "--H", "1"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("unstable margin -4.0"), "{text}");

    let out = cli(&["cylinder", "--json", "--kappa", "-9", "--tau", "0.5", "--H", "1"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["stable"], true);
    assert_eq!(v["margin"].as_f64(), Some(5.0));
}

#[test]
fn curvature_flat() {
    let out = cli(&["curvature", "--kappa", "0", "--tau", "0"]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("scalar 0.0\n"));
    let out = cli(&["--json", "curvature", "--kappa", "-1", "--tau", "0.5", "--x", "0.3", "--y", "-0.2"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["scalar"].as_f64().unwrap() + 2.5).abs() < 1e-6);
}

#[test]
fn bad_input_fails() {
    assert!(!cli(&["sphere", "--kappa", "0"]).status.success());
    assert!(!cli(&["frobnicate"]).status.success());
    let out = cli(&["sphere", "--kappa", "-1", "--tau", "0.5", "--H", "0.4"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no rotational H-sphere"));
    assert!(!cli(&["sphere", "--kappa", "0.2", "--tau", "0.1", "--H", "1"]).status.success());
    assert!(!cli(&["sweep", "--config", "/nonexistent/config.json"]).status.success());
}

#[test]
fn solve_and_save() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cap.json");
    let out = cli(&[
        "--json", "solve", "--kappa", "0", "--tau", "0", "--H", "1", "--radius", "0.5", "--n", "32", "--save",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let height = v["height"].as_f64().unwrap();
    let exact = 1.0 - 0.75_f64.sqrt();
    assert!((height / exact - 1.0).abs() < 0.01);
    assert_eq!(cmc_heights::harness::reload_height(&path).unwrap(), height);
}

#[test]
fn sweep_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg = serde_json::json!({
        "params": {"kappa": -1.0, "tau": 0.5},
        "domain": {"shape": "disk", "center": [0.0, 0.0], "radius": 0.5},
        "H_list": [1.0, 1.5],
        "grid_sizes": [16],
        "output": out_dir,
    });
    let cfg_path = dir.path().join("sweep.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = cli(&["sweep", "--config", cfg_path.to_str().unwrap(), "--workers", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = stdout(&out);
    assert_eq!(table, std::fs::read_to_string(out_dir.join("heights.dat")).unwrap());
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().skip(1).all(|l| l.ends_with("converged")));
    let records = cmc_heights::harness::load_report(&out_dir.join("report.json")).unwrap();
    assert_eq!(records.len(), 2);
}

#[test]
fn check_suite() {
    let out = cli(&["check", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v.as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["nil_sweep.json", "psl_sweep.json"] {
        let cfg = ExperimentConfig::load(&dir.join(name)).unwrap();
        assert!(cfg.h_list.iter().all(|h| *h > 0.0));
    }
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("experiment.schema.json")).unwrap()).unwrap();
    let documented: Vec<&str> = schema["properties"].as_object().unwrap().keys().map(String::as_str).collect();
    let example = serde_json::to_value(ExperimentConfig::load(&dir.join("nil_sweep.json")).unwrap()).unwrap();
    for key in example.as_object().unwrap().keys() {
        assert!(documented.contains(&key.as_str()), "{key} missing from the schema");
    }
}
