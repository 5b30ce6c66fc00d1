//! Touch-panel leakage simulator.

pub mod circuit;
pub mod freq;
pub mod screen;
pub mod synth;
pub mod trace_io;

pub use circuit::{
    coupling_ratio, delta_impedance, driving_voltage_idle, driving_voltage_touch, CircuitParams, TouchCoupling,
};
pub use freq::{cyclical_feature_frequency, estimate_frequency, FrequencyEstimate, FrequencySearch};
pub use screen::{DevicePreset, ScanAxis, ScreenSpec};
pub use synth::{
    default_sample_rate, EMTrace, Interferer, LeakageModel, NoiseParams, Simulator, TouchPath, TouchSample,
    TouchState, TraceMeta,
};
