//! Experiment configuration, stored as TOML with a schema version.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emsim::{
    default_sample_rate, CircuitParams, DevicePreset, Interferer, LeakageModel, NoiseParams, ScanAxis, ScreenSpec,
    Simulator,
};
use crate::error::{Error, Result};
use crate::posnet::{ModelConfig, TrainConfig};
use crate::sigproc::PreprocessConfig;
use crate::traj::{SmoothParams, StrokeParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    pub preset: DevicePreset,
    pub n_rows: usize,
    pub n_cols: usize,
    pub scan_axis: ScanAxis,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            preset: DevicePreset::IphoneX,
            n_rows: 8,
            n_cols: 4,
            scan_axis: ScanAxis::Columns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub samples_per_zone: usize,
    pub split_ratio: f64,
    /// Per-cycle finger wobble around the zone centre, as a fraction of the zone size.
    pub position_jitter: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            samples_per_zone: 200,
            split_ratio: 0.8,
            position_jitter: 0.25,
        }
    }
}

/// Recording conditions for the attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    /// Quiet room, probe at 5 cm, 25 dB.
    Private,
    /// Noisy room with narrowband interference, probe at 15 cm, 12 dB.
    Public,
}

impl Environment {
    pub fn noise(self) -> NoiseParams {
        match self {
            Environment::Private => NoiseParams {
                snr_db: 25.0,
                distance_cm: 5.0,
                ..NoiseParams::default()
            },
            Environment::Public => NoiseParams {
                snr_db: 12.0,
                distance_cm: 15.0,
                interferers: vec![
                    Interferer {
                        freq_hz: 50.0,
                        relative_amplitude: 0.3,
                    },
                    Interferer {
                        freq_hz: 2_400.0,
                        relative_amplitude: 0.2,
                    },
                    Interferer {
                        freq_hz: 23_700.0,
                        relative_amplitude: 0.2,
                    },
                ],
                ..NoiseParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub noise: NoiseParams,
    /// Characters scripted for `attack` runs without an input trace.
    pub characters: String,
    /// Pen speed in screen units per second.
    pub pen_speed: f64,
    /// Idle cycles before, between and after strokes.
    pub idle_cycles: usize,
    pub strokes: StrokeParams,
    pub smooth: SmoothParams,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            noise: NoiseParams {
                snr_db: 30.0,
                ..NoiseParams::default()
            },
            characters: "LOTZ7CJUVN".into(),
            pen_speed: 0.5,
            idle_cycles: 12,
            strokes: StrokeParams::default(),
            smooth: SmoothParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub width: usize,
    pub height: usize,
    pub thickness: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 64,
            thickness: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub distances_cm: Vec<f64>,
    /// Independent noise draws per character and distance.
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            distances_cm: vec![5.0, 10.0, 15.0, 20.0, 25.0],
            repeats: 1,
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub device: DeviceConfig,
    /// Defaults to the smallest Nyquist-safe multiple of `touch rate × n_input`.
    pub sample_rate: Option<f64>,
    pub circuit: CircuitParams,
    pub leakage: LeakageModel,
    /// Channel used when synthesizing the training set.
    pub noise: NoiseParams,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    pub raster: RasterConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// 8x4 grid, 200 vectors per zone, reduced network.
    pub fn desk() -> Self {
        let device = DeviceConfig::default();
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 7,
            out_dir: PathBuf::from("runs/desk"),
            model: ModelConfig::desk(device.n_rows * device.n_cols),
            device,
            sample_rate: None,
            circuit: CircuitParams::default(),
            leakage: LeakageModel::default(),
            noise: NoiseParams {
                snr_db: 20.0,
                ..NoiseParams::default()
            },
            dataset: DatasetConfig::default(),
            train: TrainConfig {
                learning_rate: 3e-3,
                epochs: 14,
                ..TrainConfig::default()
            },
            attack: AttackConfig::default(),
            raster: RasterConfig::default(),
            sweep: SweepConfig::default(),
        }
    }

    /// 32x15 grid, 1000 vectors per zone and the full-width network.
    pub fn full_scale() -> Self {
        let device = DeviceConfig {
            n_rows: 32,
            n_cols: 15,
            ..DeviceConfig::default()
        };
        Self {
            out_dir: PathBuf::from("runs/full"),
            model: ModelConfig::full(device.n_rows * device.n_cols),
            device,
            dataset: DatasetConfig {
                samples_per_zone: 1000,
                ..DatasetConfig::default()
            },
            ..Self::desk()
        }
    }

    pub fn n_zones(&self) -> usize {
        self.device.n_rows * self.device.n_cols
    }

    pub fn screen(&self) -> ScreenSpec {
        let mut s = ScreenSpec::from_preset(self.device.preset, self.device.n_rows, self.device.n_cols);
        s.scan_axis = self.device.scan_axis;
        s
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate.unwrap_or_else(|| {
            default_sample_rate(
                self.device.preset.touch_sampling_freq(),
                self.model.n_input,
                self.circuit.excitation_freq,
            )
        })
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(self.screen(), self.circuit, self.leakage.clone(), self.sample_rate())
    }

    /// Preprocessing settings, with an idle cycle of the simulated device as
    /// the alignment reference.
    pub fn preprocess(&self) -> Result<PreprocessConfig> {
        let idle = self.simulator()?.synth_cycle(None)?;
        Ok(PreprocessConfig {
            touch_sampling_freq: self.device.preset.touch_sampling_freq(),
            n_input: self.model.n_input,
            sync_gap_fraction: self.leakage.sync_gap_fraction,
            reference: Some(idle.into()),
            exec: self.train.exec,
            ..PreprocessConfig::default()
        })
    }

    /// Declared dataset size.
    pub fn total_samples(&self) -> usize {
        self.n_zones() * self.dataset.samples_per_zone
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.model.validate()?;
        if self.model.n_class != self.n_zones() {
            return Err(Error::InvalidConfig(format!(
                "model has {} classes but the grid has {} zones",
                self.model.n_class,
                self.n_zones()
            )));
        }
        self.simulator().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.noise.validate()?;
        self.attack.noise.validate()?;
        let ratio = self.dataset.split_ratio;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidConfig(format!("split_ratio must lie in (0, 1), got {ratio}")));
        }
        if !(0.0..0.5).contains(&self.dataset.position_jitter) {
            return Err(Error::InvalidConfig("position_jitter must lie in [0, 0.5)".into()));
        }
        if self.dataset.samples_per_zone == 0 || self.train.batch_size == 0 {
            return Err(Error::InvalidConfig("samples_per_zone and batch_size must be > 0".into()));
        }
        if self.raster.width < 8 || self.raster.height < 8 {
            return Err(Error::InvalidConfig("raster must be at least 8x8".into()));
        }
        if !(self.attack.pen_speed > 0.0) {
            return Err(Error::InvalidConfig("pen_speed must be > 0".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            schema_version: Option<u32>,
        }
        let probe: Probe = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        match probe.schema_version {
            Some(SCHEMA_VERSION) | None => {}
            Some(v) => {
                return Err(Error::InvalidConfig(format!(
                    "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
        }
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// SHA-256 of the serialized config.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_round_trips_through_toml() {
        let cfg = ExperimentConfig::desk();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.sample_rate(), 53_760.0);
    }

    #[test]
    fn full_scale_declares_480k_samples() {
        let cfg = ExperimentConfig::full_scale();
        cfg.validate().unwrap();
        assert_eq!(cfg.total_samples(), 480_000);
        assert_eq!(cfg.model.n_class, 480);
    }

    #[test]
    fn inconsistent_configs_rejected() {
        let mut cfg = ExperimentConfig::desk();
        cfg.model.n_class = 31;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let mut cfg = ExperimentConfig::desk();
        cfg.sample_rate = Some(30_000.0);
        assert!(cfg.validate().is_err());
        let text = ExperimentConfig::desk().to_toml().unwrap().replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 3\n[dataset]\nsamples_per_zone = 10\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.dataset.samples_per_zone, 10);
        assert_eq!(cfg.dataset.split_ratio, 0.8);
    }

    #[test]
    fn seeds_diverge_per_stream() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
