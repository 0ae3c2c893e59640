use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_otfs-sim"))
}

#[test]
fn validate_accepts_defaults() {
    let out = bin().arg("validate").output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("config ok"));
}

#[test]
fn validate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"alphas":[0.0,1.2],"trials":0}"#).unwrap();
    let out = bin()
        .arg("validate")
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid configuration"), "{err}");

    std::fs::write(&path, r#"{"unknown_field":1}"#).unwrap();
    let out = bin()
        .arg("validate")
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn sweep_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"frame":{"m":16,"n":8,"cp_len":4,"ell_max":4,"k_max":2},"paths":3,"iterative":false}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args([
            "--trials",
            "3",
            "--alphas",
            "0.3,0.6",
            "--threads",
            "2",
            "--config",
        ])
        .arg(&cfg)
        .arg("sweep")
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ["sweep.csv", "summary.json", "run.json"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn trial_prints_each_pass() {
    let out = bin()
        .args([
            "trial", "--scheme", "s1d", "--alpha", "0.4", "--passes", "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for p in 1..=3 {
        assert!(text.contains(&format!("pass {p}:")), "{text}");
    }
    let bad = bin().args(["trial", "--passes", "0"]).output().unwrap();
    assert!(!bad.status.success());
}
