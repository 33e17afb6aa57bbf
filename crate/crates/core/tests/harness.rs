use std::path::Path;

use landau_core::config::SuiteConfig;
use landau_core::{run_stages, CheckStatus, RunOptions, Stage};

fn tiny() -> SuiteConfig {
    SuiteConfig::from_json(
        r#"{"grid": {"n_per_axis": 5}, "gammas": [0.0], "checks": ["A1", "A2", "A3"],
            "coercivity_samples": 20, "kernel_pairs": 10}"#,
    )
    .unwrap()
}

fn report_without_timings(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("wall_clock");
    v
}

#[test]
fn runs_are_deterministic() {
    let cfg = tiny();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let stages = [Stage::Gap, Stage::Assemble];
    let ra = run_stages(&cfg, &stages, a.path(), RunOptions::default()).unwrap();
    run_stages(&cfg, &stages, b.path(), RunOptions::default()).unwrap();
    assert_eq!(ra.stages, vec![Stage::Assemble, Stage::Gap]);
    assert_eq!(report_without_timings(a.path()), report_without_timings(b.path()));
    for name in ["profile_g0.csv", "spectrum_g0.csv", "gap_g0.json", "fits.json", "report.json", "MANIFEST.json"] {
        assert!(a.path().join(name).is_file(), "{name} missing");
    }
    for name in ["profile_g0.csv", "spectrum_g0.csv", "gap_g0.json"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn checks_respect_the_filter() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let report = run_stages(&cfg, &[Stage::Assemble], dir.path(), RunOptions::default()).unwrap();
    let ids: Vec<&str> = report.checks.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, ["A1", "A2", "A3"]);
    assert!(report.passed, "{:#?}", report.checks);
    assert!(report.checks.iter().all(|c| c.status == CheckStatus::Passed));
    for c in &report.checks {
        let line = c.to_string();
        assert!(line.starts_with(&format!("{} PASS", c.id)), "{line}");
    }
}

#[test]
fn a_stage_without_its_inputs_leaves_a_manifest() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let err = run_stages(&cfg, &[Stage::Gap], dir.path(), RunOptions::default());
    assert!(err.is_err());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("MANIFEST.json")).unwrap()).unwrap();
    assert_eq!(manifest["failed_stage"], "gap");
    assert!(manifest["error"].as_str().unwrap().contains("assemble"));
    assert!(dir.path().join("report.json").is_file());
    assert!(!dir.path().join("fits.json").exists());
}

#[test]
fn invalid_config_writes_nothing() {
    let mut cfg = tiny();
    cfg.gammas = vec![3.0];
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(matches!(run_stages(&cfg, &[Stage::Assemble], &out, RunOptions::default()), Err(landau_core::Error::Config(_))));
    assert!(!out.exists());
}
