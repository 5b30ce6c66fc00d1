//! Pipeline stages shared by the command line and the tests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::attack::{attack_character, templates, CharacterResult};
use super::config::ExperimentConfig;
use super::dataset::{load_split, split_dataset, synth_dataset, DatasetManifest};
use super::report::{emit_report, history_csv, DistancePoint, Provenance, Report, TrainingSummary};
use crate::error::{Error, Result};
use crate::posnet::checkpoint::{encode_checkpoint, TMC_VERSION};
use crate::posnet::train::train_with_progress;
use crate::posnet::{evaluate, EpochStats, Parameters};
use crate::sigproc::fvb::FVB_VERSION;
use crate::emsim::trace_io::EMT_VERSION;
use crate::par;

pub const DATASET_DIR: &str = "dataset";
pub const MODEL_FILE: &str = "model.tmc";
pub const HISTORY_FILE: &str = "history.csv";

pub fn provenance(config: &ExperimentConfig) -> Result<Provenance> {
    Ok(Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config_digest: config.digest()?,
        manifest_digest: None,
        checkpoint_digest: None,
        formats: BTreeMap::from([
            ("EMT1".to_string(), EMT_VERSION as u32),
            ("FVB1".to_string(), FVB_VERSION as u32),
            ("TMC1".to_string(), TMC_VERSION as u32),
            ("config".to_string(), super::SCHEMA_VERSION),
        ]),
    })
}

/// Synthesizes the dataset under `out/dataset` and adds the stratified split.
pub fn prepare_dataset(config: &ExperimentConfig, out: &Path) -> Result<DatasetManifest> {
    let dir = out.join(DATASET_DIR);
    let manifest = synth_dataset(config, &dir)?;
    let manifest = split_dataset(&manifest, config.dataset.split_ratio, config.seed)?;
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}

pub struct TrainingOutcome {
    pub params: Parameters<f32>,
    pub summary: TrainingSummary,
    pub checkpoint_digest: String,
}

/// Trains on the manifest's split and writes `model.tmc` and `history.csv` to `out`.
pub fn run_training(
    config: &ExperimentConfig,
    manifest: &DatasetManifest,
    dataset_dir: &Path,
    out: &Path,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainingOutcome> {
    if manifest.n_input != config.model.n_input || manifest.n_rows * manifest.n_cols != config.model.n_class {
        return Err(Error::Compatibility("dataset was generated for a different model or grid".into()));
    }
    let (train_set, test_set) = load_split(manifest, dataset_dir)?;
    let init = Parameters::<f32>::init(&config.model, config.seed)?;
    let (params, history) = train_with_progress(init, &train_set, Some(&test_set), &config.train, on_epoch)?;
    let eval = evaluate(&params, &test_set, config.train.exec)?;
    let train_accuracy = match history.last() {
        Some(h) => h.train_acc,
        None => evaluate(&params, &train_set, config.train.exec)?.accuracy,
    };
    fs::create_dir_all(out)?;
    let bytes = encode_checkpoint(&params);
    fs::write(out.join(MODEL_FILE), &bytes)?;
    fs::write(out.join(HISTORY_FILE), history_csv(&history))?;
    Ok(TrainingOutcome {
        params,
        summary: TrainingSummary {
            n_train: train_set.len(),
            n_test: test_set.len(),
            train_accuracy,
            test_accuracy: eval.accuracy,
            confusion: eval.confusion,
            history,
        },
        checkpoint_digest: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Attacks every configured character at the attack noise setting.
pub fn run_scripted_attacks(config: &ExperimentConfig, params: &Parameters<f32>) -> Result<Vec<CharacterResult>> {
    let sim = config.simulator()?;
    let tpl = templates(config)?;
    let chars: Vec<char> = config.attack.characters.chars().collect();
    par::try_map(config.train.exec, &chars, |&c| {
        attack_character(config, &sim, params, &tpl, c, &config.attack.noise, 0)
    })
}

/// Mean Jaccard and top-3 rate per configured distance, same noise draws at each.
pub fn sweep_distance(config: &ExperimentConfig, params: &Parameters<f32>) -> Result<Vec<DistancePoint>> {
    let sim = config.simulator()?;
    let tpl = templates(config)?;
    let chars: Vec<char> = config.attack.characters.chars().collect();
    let repeats = config.sweep.repeats.max(1) as u64;
    let cases: Vec<(char, u64)> = chars.iter().flat_map(|&c| (0..repeats).map(move |r| (c, r))).collect();
    config
        .sweep
        .distances_cm
        .iter()
        .map(|&d| {
            let noise = crate::emsim::NoiseParams {
                distance_cm: d,
                ..config.attack.noise.clone()
            };
            let results = par::try_map(config.train.exec, &cases, |&(c, r)| {
                attack_character(config, &sim, params, &tpl, c, &noise, r)
            })?;
            let n = results.len().max(1) as f64;
            Ok(DistancePoint {
                distance_cm: d,
                mean_jaccard: results.iter().map(|r| r.jaccard).sum::<f64>() / n,
                top3_rate: results.iter().filter(|r| r.top3_hit).count() as f64 / n,
                n_cases: results.len(),
            })
        })
        .collect()
}

/// synth → split → train → attack → sweep → report, all under `out`.
pub fn run_pipeline(config: &ExperimentConfig, out: &Path, mut log: impl FnMut(&str)) -> Result<Report> {
    config.validate()?;
    fs::create_dir_all(out)?;
    config.save(&out.join("config.toml"))?;
    let mut report = Report {
        provenance: provenance(config)?,
        config: config.to_toml()?,
        raster: Some(config.raster),
        ..Report::default()
    };

    let t = Instant::now();
    let manifest = prepare_dataset(config, out)?;
    report.provenance.manifest_digest = Some(manifest.digest()?);
    report.runtime_s.insert("synth".into(), t.elapsed().as_secs_f64());
    log(&format!("dataset: {} vectors in {:.1} s", manifest.total_samples(), t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let trained = run_training(config, &manifest, &out.join(DATASET_DIR), out, |e| {
        log(&format!(
            "epoch {:>3}  loss {:.4}  train {:.4}  test {:.4}",
            e.epoch,
            e.loss,
            e.train_acc,
            e.test_acc.unwrap_or(f64::NAN)
        ))
    })?;
    report.runtime_s.insert("train".into(), t.elapsed().as_secs_f64());
    report.provenance.checkpoint_digest = Some(trained.checkpoint_digest.clone());
    report.training = Some(trained.summary);

    let t = Instant::now();
    report.characters = run_scripted_attacks(config, &trained.params)?;
    report.summarize_characters();
    report.runtime_s.insert("attack".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    report.distance_sweep = sweep_distance(config, &trained.params)?;
    report.runtime_s.insert("sweep".into(), t.elapsed().as_secs_f64());

    emit_report(&report, out)?;
    Ok(report)
}
