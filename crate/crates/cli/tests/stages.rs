use std::process::Command;

use skg_cli::pipeline::{cmd_embed, cmd_scatter, cmd_simulate};
use skg_cli::{ExperimentConfig, Layout, Log, Stage};

fn small() -> ExperimentConfig {
    ExperimentConfig { n_seeds: 1, timestamps: 1, subcarriers: vec![0], ..ExperimentConfig::default() }
}

#[test]
fn embed_without_features_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let err = cmd_embed(&small(), &layout, Log { quiet: true }).unwrap_err();
    assert_eq!(err.stage, Stage::Embed);
    assert_eq!(err.path.as_deref(), Some(layout.features(0, 0, skg_core::Role::Ap, 0).as_path()));
    assert!(err.to_string().starts_with("embed stage: "), "{err}");
}

#[test]
fn simulate_then_scatter_writes_features_and_correlations() {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let cfg = small();
    cmd_simulate(&cfg, &layout, Log { quiet: true }).unwrap();
    let corr = cmd_scatter(&cfg, &layout, Log { quiet: true }).unwrap();
    assert!(corr.sta[0].unwrap() > corr.sta[2].unwrap());
    assert!(layout.features(0, 0, skg_core::Role::Eve, 0).is_file());
    let table = std::fs::read_to_string(layout.file("fig3_corr.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn binary_reports_a_bad_config_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "n_seeds = 0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_skg"))
        .args(["simulate", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("config stage") && stderr.contains("bad.toml") && stderr.contains("n_seeds"), "{stderr}");
}
