use std::path::Path;
use std::process::{Command, Output};

fn mtss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_config(out: &Path) -> String {
    format!(
        r#"{{"scenario": "semi-6.1-desk", "agents": ["mtss", "oracle"], "T": 10, "replications": 2,
            "seed_base": 3, "output_dir": {:?}}}"#,
        out
    )
}

#[test]
fn presets_list_names_every_preset() {
    let out = mtss(&["presets", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in mtss::env::PRESET_NAMES {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

#[test]
fn run_writes_curves_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &small_config(&out_dir));
    let out = mtss(&["run", "--config", &cfg, "--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("semi-6.1-desk__mtss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("round,mean_cum_regret,stderr_cum_regret,mean_inst_regret,n_replications")
    );
    assert_eq!(lines.count(), 10);
    assert!(csv.lines().nth(1).unwrap().ends_with(",2"));
    assert!(out_dir.join("semi-6.1-desk__oracle.csv").exists());
    assert!(out_dir.join("metadata.json").exists());

    // Same config, same bytes.
    let again = mtss(&["run", "--config", &cfg]);
    assert!(again.status.success());
    assert_eq!(
        csv,
        std::fs::read_to_string(out_dir.join("semi-6.1-desk__mtss.csv")).unwrap()
    );
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), &small_config(&out_dir));
    let out = mtss(&["run", "--config", &cfg, "--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!out_dir.exists());
}

#[test]
fn validate_accepts_good_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), &small_config(&dir.path().join("out")));
    assert_eq!(mtss(&["validate", "--config", &good]).status.code(), Some(0));

    let bad = write_config(
        dir.path(),
        r#"{"scenario": "semi-6.1-desk", "agents": ["nobody"], "T": 5, "replications": 1, "output_dir": "x"}"#,
    );
    let out = mtss(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(mtss(&["run", "--config", &bad]).status.code(), Some(1));

    let missing = dir.path().join("absent.json");
    assert_eq!(
        mtss(&["validate", "--config", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn failed_replications_exit_with_two() {
    // psi this small puts some item parameters at the floor, so epochs never end.
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"scenario": {{"name": "tiny-psi", "problem": "mnl", "n_items": 20, "k": 3, "dim": 2,
                 "theta_source": {{"kind": "beta_logistic", "psi": 0.01, "link": "shifted"}}}},
                "agents": ["agnostic"], "T": 20, "replications": 3, "output_dir": {:?}}}"#,
            out_dir
        ),
    );
    let out = mtss(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let meta = std::fs::read_to_string(out_dir.join("metadata.json")).unwrap();
    assert!(meta.contains("MNL epoch exceeded"));
}
