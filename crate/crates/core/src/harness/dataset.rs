//! Per-zone dataset synthesis, manifests and stratified splits.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{derive_seed, ExperimentConfig};
use crate::emsim::{Simulator, TouchPath, TouchSample};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::par;
use crate::posnet::Dataset;
use crate::sigproc::{fvb, preprocess_stream, FeatureVector};

pub const MANIFEST_VERSION: u32 = 1;
const SYNTH_STREAM: u64 = 0x5359_4E54;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneEntry {
    pub zone: usize,
    pub row: usize,
    pub col: usize,
    /// Batch file, relative to the manifest's directory.
    pub file: String,
    pub n_samples: usize,
    pub sha256: String,
}

/// Row indices into each zone's batch, one list per zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub ratio: f64,
    pub seed: u64,
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub format: String,
    pub generation_seed: u64,
    pub config_digest: String,
    pub n_input: usize,
    pub n_rows: usize,
    pub n_cols: usize,
    pub zones: Vec<ZoneEntry>,
    pub split: Option<SplitAssignment>,
}

impl DatasetManifest {
    pub fn total_samples(&self) -> usize {
        self.zones.iter().map(|z| z.n_samples).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| Error::InvalidDataset(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::InvalidDataset(format!("manifest version {} is not supported", m.version)));
        }
        Ok(m)
    }

    /// Coverage and split integrity checks.
    pub fn check(&self) -> Result<()> {
        let n = self.n_rows * self.n_cols;
        if self.zones.len() != n || self.zones.iter().enumerate().any(|(i, z)| z.zone != i) {
            return Err(Error::InvalidDataset(format!("manifest does not cover all {n} zones in order")));
        }
        if let Some(split) = &self.split {
            if split.train.len() != n || split.test.len() != n {
                return Err(Error::InvalidDataset("split does not list every zone".into()));
            }
            for (z, entry) in self.zones.iter().enumerate() {
                let mut seen = vec![false; entry.n_samples];
                for &i in split.train[z].iter().chain(&split.test[z]) {
                    if i >= entry.n_samples || std::mem::replace(&mut seen[i], true) {
                        return Err(Error::InvalidDataset(format!("zone {z}: sample {i} assigned twice or out of range")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Random stationary touch inside one zone, wobbling from cycle to cycle.
fn zone_path(sim: &Simulator, zone: usize, n_cycles: usize, jitter: f64, rng: &mut ChaCha8Rng) -> Result<TouchPath> {
    let screen = &sim.screen;
    let (row, col) = (zone / screen.n_cols, zone % screen.n_cols);
    let c = screen.zone_center(row, col);
    let (w, h) = (1.0 / screen.n_cols as f64, 1.0 / screen.n_rows as f64);
    let f = screen.touch_sampling_freq;
    let samples = (0..=n_cycles)
        .map(|i| {
            let dx = rng.gen_range(-jitter..=jitter) * w;
            let dy = rng.gen_range(-jitter..=jitter) * h;
            TouchSample::contact(i as f64 / f, Point::new(c.x + dx, c.y + dy))
        })
        .collect();
    TouchPath::new(samples)
}

/// Feature vectors for one zone.
pub fn synth_zone(config: &ExperimentConfig, sim: &Simulator, zone: usize) -> Result<Vec<FeatureVector>> {
    let want = config.dataset.samples_per_zone;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed ^ SYNTH_STREAM, zone as u64));
    // Two spare cycles absorb the partial head and tail cut by interception.
    let path = zone_path(sim, zone, want + 2, config.dataset.position_jitter, &mut rng)?;
    let offset = rng.gen_range(0..sim.cycle_len());
    let trace = sim.synth_trace_with_offset(&path, &config.noise, rng.gen(), offset)?;
    let mut pre = config.preprocess()?;
    pre.exec = crate::ExecMode::Sequential;
    let mut vectors = preprocess_stream(&trace, &pre)?;
    if vectors.len() < want {
        return Err(Error::InsufficientData(format!(
            "zone {zone}: {} cycles recovered, {want} needed",
            vectors.len()
        )));
    }
    vectors.truncate(want);
    Ok(vectors)
}

/// Synthesizes every zone, writes one `FVB1` batch per zone plus
/// `manifest.json` under `dir`.
pub fn synth_dataset(config: &ExperimentConfig, dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let sim = config.simulator()?;
    fs::create_dir_all(dir)?;
    let n_input = config.model.n_input;
    let zones: Vec<usize> = (0..config.n_zones()).collect();
    let entries = par::try_map(config.train.exec, &zones, |&zone| -> Result<ZoneEntry> {
        let vectors = synth_zone(config, &sim, zone)?;
        let bytes = fvb::encode_batch(&vectors, n_input)?;
        let file = format!("zone_{zone:04}.fvb");
        fs::write(dir.join(&file), &bytes)?;
        Ok(ZoneEntry {
            zone,
            row: zone / config.device.n_cols,
            col: zone % config.device.n_cols,
            file,
            n_samples: vectors.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    })?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        format: "FVB1".into(),
        generation_seed: config.seed,
        config_digest: config.digest()?,
        n_input,
        n_rows: config.device.n_rows,
        n_cols: config.device.n_cols,
        zones: entries,
        split: None,
    };
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Stratified split: each zone's samples are shuffled and the first
/// `round(ratio · n)` go to training, keeping at least one on each side.
pub fn split_dataset(manifest: &DatasetManifest, ratio: f64, seed: u64) -> Result<DatasetManifest> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut train = Vec::with_capacity(manifest.zones.len());
    let mut test = Vec::with_capacity(manifest.zones.len());
    for entry in &manifest.zones {
        let n = entry.n_samples;
        if n < 2 {
            return Err(Error::InvalidDataset(format!("zone {} has {n} samples, at least 2 needed", entry.zone)));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, entry.zone as u64)));
        let k = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
        let mut tr = idx[..k].to_vec();
        let mut te = idx[k..].to_vec();
        tr.sort_unstable();
        te.sort_unstable();
        train.push(tr);
        test.push(te);
    }
    let mut out = manifest.clone();
    out.split = Some(SplitAssignment { ratio, seed, train, test });
    out.check()?;
    Ok(out)
}

/// Reads every batch named by the manifest, verifying digests.
pub fn load_batches(manifest: &DatasetManifest, dir: &Path) -> Result<Vec<Vec<FeatureVector>>> {
    manifest.check()?;
    manifest
        .zones
        .iter()
        .map(|entry| {
            let bytes = fs::read(dir.join(&entry.file))?;
            if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
                return Err(Error::InvalidDataset(format!("{} does not match its digest", entry.file)));
            }
            let (vectors, n_input) = fvb::decode_batch(&bytes)?;
            if n_input != manifest.n_input || vectors.len() != entry.n_samples {
                return Err(Error::InvalidDataset(format!("{} disagrees with the manifest", entry.file)));
            }
            Ok(vectors)
        })
        .collect()
}

/// Train and test sets following the manifest's split, zone-major order.
pub fn load_split(manifest: &DatasetManifest, dir: &Path) -> Result<(Dataset<f32>, Dataset<f32>)> {
    let split = manifest
        .split
        .as_ref()
        .ok_or_else(|| Error::InvalidDataset("manifest has no split; run split first".into()))?;
    let batches = load_batches(manifest, dir)?;
    let mut train = Dataset::new(manifest.n_input);
    let mut test = Dataset::new(manifest.n_input);
    for (zone, vectors) in batches.iter().enumerate() {
        for &i in &split.train[zone] {
            train.push(&vectors[i].values, zone)?;
        }
        for &i in &split.test[zone] {
            test.push(&vectors[i].values, zone)?;
        }
    }
    Ok((train, test))
}
