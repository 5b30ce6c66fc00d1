//! Experiment orchestration: datasets, training runs, attacks and reports.

pub mod attack;
pub mod config;
pub mod dataset;
pub mod report;
pub mod run;
pub mod script;

pub use attack::{attack_character, attack_trace, check_compatible, AttackOutcome, CharacterResult, NO_STROKES};
pub use config::{derive_seed, Environment, ExperimentConfig, SCHEMA_VERSION};
pub use dataset::{load_split, split_dataset, synth_dataset, DatasetManifest};
pub use report::{emit_report, DistancePoint, Report, TrainingSummary};
pub use run::{prepare_dataset, run_pipeline, run_scripted_attacks, run_training, sweep_distance};
pub use script::{script_character, ScriptedInput};
