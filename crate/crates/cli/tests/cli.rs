use std::path::Path;
use std::process::Command;

fn inrlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_inrlab"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn support_subcommand_writes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.json", r#"{"omega": [[1.0], [3.0]], "k": 3, "l": 2}"#);
    let out = tmp.path().join("run");
    let status = inrlab().args(["support", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    for f in ["config.json", "support.csv", "summary.csv", "manifest.csv"] {
        assert!(manifest.lines().any(|l| l.starts_with(&format!("{f},support,"))), "{manifest}");
    }
    assert!(String::from_utf8_lossy(&status.stdout).contains("support_size = 9"));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.json", r#"{"omega": [[1.0]], "k": 3, "l": 2, "extra": true}"#);
    let out = inrlab().args(["support", "--config"]).arg(&bad).arg("--out").arg(tmp.path().join("r")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));

    let missing = inrlab().args(["train", "--config", "/no/such/file.json", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));

    let usage = inrlab().args(["expt", "not-an-experiment", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "t.json",
        r#"{
  "model": {"kind": "build", "seed": 0, "mapping": {"kind": "fourier-deterministic", "levels": 4, "input_dim": 1},
            "layers": [{"width": 16, "activation": {"kind": "relu"}}, {"width": 1, "activation": {"kind": "identity"}}]},
  "data": {"kind": "signal", "f": 3.0, "fs": 64.0, "n": 64},
  "optimizer": {"optimizer": {"kind": "gd", "lr": 1e6}, "iterations": 50}
}"#,
    );
    let out = inrlab().args(["train", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("r")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn expt_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let out = inrlab().args(["expt", "support-check", "--seed", "3", "--out"]).arg(tmp.path().join(run)).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["support.csv", "spectrum.csv", "support_check.csv", "summary.csv", "manifest.csv", "config.json"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}
