use std::path::Path;
use std::process::{Command, Output};

fn landau(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landau")).args(args).current_dir(cwd).env("LANDAU_WORKERS", "1").output().unwrap()
}

#[test]
fn help_lists_the_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = landau(&["--help"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["assemble", "gap", "branches", "chain", "decompose", "verify"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    for (i, body) in ["{", r#"{"bogus": true}"#, r#"{"grid": {"n_per_axis": 6}}"#].iter().enumerate() {
        let cfg = dir.path().join(format!("bad{i}.json"));
        std::fs::write(&cfg, body).unwrap();
        let out_dir = dir.path().join(format!("out{i}"));
        let out = landau(&["verify", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], dir.path());
        assert_eq!(out.status.code(), Some(2), "{body}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out_dir.exists(), "{body}: output directory was created");
    }
    let missing = landau(&["gap", "--config", "nope.json", "--out", "o"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn fast_and_slow_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let out = landau(&["verify", "--fast", "--slow"], dir.path());
    assert!(!out.status.success());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn assemble_on_a_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    std::fs::write(&cfg, r#"{"grid": {"n_per_axis": 5}, "gammas": [-1.0], "checks": ["A1", "A2"], "coercivity_samples": 10}"#).unwrap();
    let out = landau(&["assemble", "--config", cfg.to_str().unwrap(), "--out", "run", "--export"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.lines().any(|l| l.starts_with("A1 PASS")), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("A2 PASS")), "{stdout}");
    let run = dir.path().join("run");
    for name in ["profile_g-1.csv", "report.json", "MANIFEST.json"] {
        assert!(run.join(name).is_file(), "{name} missing");
    }
    let manifest = std::fs::read_to_string(run.join("MANIFEST.json")).unwrap();
    assert!(manifest.contains("\"assemble\""), "{manifest}");
}
