use std::path::Path;
use std::process::{Command, Output};

use aoa_core::harness::config::{ExperimentConfig, GridSpec, SceneSpec};

fn aoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aoa")).args(args).output().unwrap()
}

fn write_tiny_config(dir: &Path) -> String {
    let mut cfg = ExperimentConfig {
        grid: GridSpec { start_deg: -10.0, stop_deg: 10.0, step_deg: 5.0 },
        rho_sweep: vec![1.0],
        snr_sweep_db: vec![10.0],
        slots_per_angle: 5,
        num_subregions: 1,
        region_margin: 0,
        spectrum_scene: SceneSpec { aoa_deg: -5.0, snr_db: None },
        ..ExperimentConfig::default()
    };
    cfg.autoencoder.epochs = 1;
    cfg.modl.epochs = 1;
    let path = dir.join("tiny.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn selftest_succeeds() {
    let out = aoa(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = aoa(&["generate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_estimator_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = aoa(&["generate", "--out", dir.path().to_str().unwrap(), "--estimators", "music,esprit"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_without_data_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = aoa(&["evaluate", "--out", dir.path().to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn tiny_end_to_end_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out_dir = dir.path().join("run");
    let out = out_dir.to_str().unwrap();
    for verb in ["generate", "train", "evaluate"] {
        let o = aoa(&[verb, "--config", &cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{verb}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = aoa(&["spectrum", "--config", &cfg, "--out", out, "--aoa", "-5", "--estimators", "dbf,moddnn"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "loss.csv", "rmse_vs_snr.csv", "rmse_vs_rho.csv", "cdf.csv", "boxplot.csv", "errors.csv", "spectrum.csv"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let spectrum = std::fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    assert!(spectrum.lines().skip(1).all(|l| l.contains(",dbf,") || l.contains(",moddnn,")));
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(aoa(&["generate", "--config", &cfg, "--out", a.to_str().unwrap(), "--seed", "1"]).status.success());
    assert!(aoa(&["generate", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "2"]).status.success());
    let ma = std::fs::read_to_string(a.join("manifest.json")).unwrap();
    let mb = std::fs::read_to_string(b.join("manifest.json")).unwrap();
    assert_ne!(ma, mb);
}

#[test]
fn partial_config_takes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("partial.json");
    std::fs::write(&path, r#"{"slots_per_angle": 5, "spectrum_scene": {"aoa_deg": 0.0, "snr_db": null}, "rho_sweep": [1.0], "snr_sweep_db": [10.0], "grid": {"start_deg": -4.0, "stop_deg": 4.0, "step_deg": 2.0}, "num_subregions": 1, "region_margin": 0}"#).unwrap();
    let out = dir.path().join("run");
    let o = aoa(&["generate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}
