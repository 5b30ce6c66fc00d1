use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use touchleak::harness::ExperimentConfig;
use touchleak::posnet::{save_model, ModelConfig, Parameters};

fn touchleak(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_touchleak"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("run touchleak")
}

#[test]
fn init_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = touchleak(dir.path(), &["--seed", "42", "init-config"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.n_zones(), 32);
}

#[test]
fn synth_then_split() {
    let dir = tempfile::tempdir().unwrap();
    assert!(touchleak(dir.path(), &["synth"]).status.success());
    let o = touchleak(dir.path(), &["split", "--ratio", "0.5"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "3200 train / 3200 test");
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = \"seven\"\n").unwrap();
    let o = touchleak(dir.path(), &["--config", bad.to_str().unwrap(), "synth"]);
    assert_eq!(o.status.code(), Some(2));

    let o = touchleak(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(3));

    let o = touchleak(dir.path(), &["eval"]);
    assert_eq!(o.status.code(), Some(5));

    let mut cfg = ExperimentConfig::desk();
    cfg.device.n_cols = 2;
    cfg.model = ModelConfig::desk(16);
    let narrow = dir.path().join("narrow.toml");
    cfg.save(&narrow).unwrap();
    let params = Parameters::<f32>::init(&ModelConfig::desk(32), 0).unwrap();
    save_model(&params, &dir.path().join("model.tmc")).unwrap();
    let o = touchleak(dir.path(), &["--config", narrow.to_str().unwrap(), "attack", "--text", "L"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn full_scale_conflicts_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = touchleak(dir.path(), &["--full-scale", "--config", "x.toml", "init-config"]);
    assert!(!o.status.success());
}
