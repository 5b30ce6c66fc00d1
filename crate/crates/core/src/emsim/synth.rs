//! Trace synthesis for a sequentially scanned touch panel.
//!
//! Each touch-sampling period is one feature cycle: a quiet sync gap followed
//! by one Hann-windowed carrier burst per TX electrode, in scan order. A
//! finger over electrode `k` raises the driving voltage of burst `k` and
//! stretches it in proportion to the off-axis coordinate (slower settling
//! further along the electrode). The scan-axis position moves the dominant
//! burst by whole slots; the other axis only reshapes it within its slot.
//! Every burst starts on the slot grid, so the sync gap marks the cycle start.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::circuit::{coupling_ratio, driving_voltage_idle, CircuitParams, TouchCoupling, DEFAULT_CONTACT_CF};
use super::screen::ScreenSpec;
use crate::error::{invalid, Result};
use crate::geom::Point;

/// How circuit state turns into the waveform seen by the probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeakageModel {
    /// Fraction of each cycle spent in the quiet sync gap before the scan.
    pub sync_gap_fraction: f64,
    /// Burst length as a fraction of the scan slot.
    pub burst_duty: f64,
    /// Radiated amplitude grows as `1 + coupling_gain · (|V_touch|/|V_idle| - 1)`.
    /// A gain of 1 is plain driving-voltage scaling.
    pub coupling_gain: f64,
    /// Fraction of the free slot time the touched burst is stretched by at the
    /// far off-axis edge.
    pub off_axis_gain: f64,
    /// Probe transfer gain (volt per volt of driving voltage).
    pub probe_gain: f64,
    /// Finger coupling capacitance at contact (farad).
    pub contact_cf: f64,
}

impl Default for LeakageModel {
    fn default() -> Self {
        Self {
            sync_gap_fraction: 0.2,
            burst_duty: 0.5,
            coupling_gain: 600.0,
            off_axis_gain: 1.0,
            probe_gain: 1.0,
            contact_cf: DEFAULT_CONTACT_CF,
        }
    }
}

impl LeakageModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.9).contains(&self.sync_gap_fraction) {
            return Err(invalid("sync_gap_fraction must lie in [0, 0.9)"));
        }
        if !(self.burst_duty > 0.0 && self.burst_duty <= 1.0) {
            return Err(invalid("burst_duty must lie in (0, 1]"));
        }
        if !(self.coupling_gain >= 0.0 && self.off_axis_gain >= 0.0 && self.off_axis_gain <= 1.0) {
            return Err(invalid("coupling_gain must be >= 0 and off_axis_gain in [0, 1]"));
        }
        if !(self.probe_gain > 0.0 && self.contact_cf >= 0.0) {
            return Err(invalid("probe_gain must be > 0 and contact_cf >= 0"));
        }
        Ok(())
    }
}

/// One timestamped sample of the finger's state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchSample {
    pub t: f64,
    /// Finger location over the screen; `None` when out of range.
    pub position: Option<Point>,
    pub touching: bool,
    /// 0 = contact, 1 = out of range.
    pub finger_distance: f64,
}

impl TouchSample {
    pub fn idle(t: f64) -> Self {
        Self {
            t,
            position: None,
            touching: false,
            finger_distance: 1.0,
        }
    }

    pub fn contact(t: f64, p: Point) -> Self {
        Self {
            t,
            position: Some(p),
            touching: true,
            finger_distance: 0.0,
        }
    }

    pub fn hover(t: f64, p: Point, finger_distance: f64) -> Self {
        Self {
            t,
            position: Some(p),
            touching: false,
            finger_distance,
        }
    }
}

/// Finger state at one instant, interpolated from a [`TouchPath`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TouchState {
    pub position: Option<Point>,
    pub touching: bool,
    pub finger_distance: f64,
}

/// The victim's input as an ordered series of finger samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchPath {
    samples: Vec<TouchSample>,
}

impl TouchPath {
    pub fn new(samples: Vec<TouchSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("touch path is empty"));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(invalid(format!("path times must strictly increase ({} -> {})", w[0].t, w[1].t)));
            }
        }
        for s in &samples {
            if !s.t.is_finite() || !(0.0..=1.0).contains(&s.finger_distance) {
                return Err(invalid("path sample has non-finite time or distance outside [0, 1]"));
            }
            if s.touching && s.position.is_none() {
                return Err(invalid("touching sample without a position"));
            }
        }
        Ok(Self { samples })
    }

    /// Finger resting on `p` for `duration` seconds.
    pub fn stationary(p: Point, duration: f64) -> Result<Self> {
        Self::new(vec![TouchSample::contact(0.0, p), TouchSample::contact(duration, p)])
    }

    /// No finger for `duration` seconds.
    pub fn idle(duration: f64) -> Result<Self> {
        Self::new(vec![TouchSample::idle(0.0), TouchSample::idle(duration)])
    }

    pub fn samples(&self) -> &[TouchSample] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }

    pub fn state_at(&self, t: f64) -> TouchState {
        let s = &self.samples;
        let as_state = |x: &TouchSample| TouchState {
            position: x.position,
            touching: x.touching,
            finger_distance: x.finger_distance,
        };
        if t <= s[0].t {
            return as_state(&s[0]);
        }
        let i = s.partition_point(|x| x.t <= t);
        if i >= s.len() {
            return as_state(&s[s.len() - 1]);
        }
        let (a, b) = (&s[i - 1], &s[i]);
        let u = (t - a.t) / (b.t - a.t);
        let position = match (a.position, b.position) {
            (Some(pa), Some(pb)) => Some(pa.lerp(pb, u)),
            (pa, _) => pa,
        };
        TouchState {
            position,
            touching: a.touching,
            finger_distance: a.finger_distance + (b.finger_distance - a.finger_distance) * u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub freq_hz: f64,
    /// Amplitude relative to the clean signal RMS at the reference distance.
    pub relative_amplitude: f64,
}

/// Channel impairments between the handset and the probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Signal-to-noise ratio at the reference distance; `+inf` disables noise.
    pub snr_db: f64,
    pub distance_cm: f64,
    pub attenuation_exponent: f64,
    pub reference_distance_cm: f64,
    pub interferers: Vec<Interferer>,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            snr_db: f64::INFINITY,
            distance_cm: 5.0,
            attenuation_exponent: 3.0,
            reference_distance_cm: 5.0,
            interferers: Vec::new(),
        }
    }
}

impl NoiseParams {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn with_snr(snr_db: f64) -> Self {
        Self {
            snr_db,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_cm > 0.0 && self.reference_distance_cm > 0.0) {
            return Err(invalid("distances must be > 0"));
        }
        if self.snr_db.is_nan() || self.attenuation_exponent.is_nan() {
            return Err(invalid("snr_db and attenuation_exponent must be numbers"));
        }
        Ok(())
    }

    /// Amplitude factor `(reference / distance)^exponent`.
    pub fn attenuation(&self) -> f64 {
        (self.reference_distance_cm / self.distance_cm).powf(self.attenuation_exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub device: String,
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub distance_cm: Option<f64>,
    pub description: String,
}

/// A sampled probe voltage record.
#[derive(Debug, Clone, PartialEq)]
pub struct EMTrace {
    pub sample_rate: f64,
    pub samples: Vec<f32>,
    pub meta: TraceMeta,
}

impl EMTrace {
    pub fn new(sample_rate: f64, samples: Vec<f32>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid("sample_rate must be > 0"));
        }
        if samples.is_empty() {
            return Err(invalid("trace must contain at least one sample"));
        }
        Ok(Self {
            sample_rate,
            samples,
            meta: TraceMeta::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Smallest multiple of `touch_freq · n_input` that keeps the excitation
/// carrier below Nyquist, so each cycle is a whole multiple of `n_input` samples.
pub fn default_sample_rate(touch_freq: f64, n_input: usize, excitation_freq: f64) -> f64 {
    let base = touch_freq * n_input as f64;
    let mut m = 1.0;
    while base * m <= 2.0 * excitation_freq {
        m += 1.0;
    }
    base * m
}

/// Synthesizes feature cycles and traces for one screen/circuit pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    pub screen: ScreenSpec,
    pub circuit: CircuitParams,
    pub leakage: LeakageModel,
    pub sample_rate: f64,
}

impl Simulator {
    pub fn new(screen: ScreenSpec, circuit: CircuitParams, leakage: LeakageModel, sample_rate: f64) -> Result<Self> {
        screen.validate()?;
        circuit.validate()?;
        leakage.validate()?;
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid("sample_rate must be > 0"));
        }
        if circuit.excitation_freq >= sample_rate / 2.0 {
            return Err(invalid(format!(
                "excitation {} Hz violates Nyquist at {} Hz sampling",
                circuit.excitation_freq, sample_rate
            )));
        }
        let sim = Self {
            screen,
            circuit,
            leakage,
            sample_rate,
        };
        let slots = sim.screen.n_scan_slots();
        let gap = sim.sync_gap_len();
        if sim.cycle_len() < gap + 2 * slots {
            return Err(invalid(format!(
                "cycle of {} samples is too short for {slots} scan slots",
                sim.cycle_len()
            )));
        }
        Ok(sim)
    }

    /// Samples per feature cycle.
    pub fn cycle_len(&self) -> usize {
        (self.sample_rate / self.screen.touch_sampling_freq).round() as usize
    }

    fn sync_gap_len(&self) -> usize {
        (self.cycle_len() as f64 * self.leakage.sync_gap_fraction).round() as usize
    }

    /// Start offsets of each scan slot within a cycle, plus the cycle end.
    pub fn slot_bounds(&self) -> Vec<usize> {
        let len = self.cycle_len();
        let gap = self.sync_gap_len();
        let n = self.screen.n_scan_slots();
        let span = (len - gap) as f64;
        (0..=n).map(|i| gap + (i as f64 * span / n as f64).round() as usize).collect()
    }

    /// Nominal slot duration in samples.
    pub fn slot_len(&self) -> f64 {
        (self.cycle_len() - self.sync_gap_len()) as f64 / self.screen.n_scan_slots() as f64
    }

    /// One noise-free feature cycle.
    pub fn synth_cycle(&self, touch: Option<(Point, TouchCoupling)>) -> Result<Vec<f64>> {
        let idle_amp = self.leakage.probe_gain * driving_voltage_idle(&self.circuit, self.circuit.excitation_freq)?.norm();
        let touched = match touch {
            Some((p, coupling)) => {
                let ratio = coupling_ratio(&self.circuit, &coupling)?;
                let gain = 1.0 + self.leakage.coupling_gain * (ratio - 1.0);
                let (slot, off_axis) = self.screen.scan_coordinates(p);
                Some((slot, idle_amp * gain, off_axis))
            }
            None => None,
        };

        let bounds = self.slot_bounds();
        let burst_len = self.leakage.burst_duty * self.slot_len();
        let carrier = 2.0 * PI * self.circuit.excitation_freq / self.sample_rate;
        let mut out = vec![0.0; self.cycle_len()];
        for (slot, w) in bounds.windows(2).enumerate() {
            let (start, end) = (w[0], w[1]);
            let room = ((end - start) as f64 - burst_len).max(0.0);
            let (amp, len) = match touched {
                Some((s, amp, off)) if s == slot => (amp, burst_len + self.leakage.off_axis_gain * off * room),
                _ => (idle_amp, burst_len),
            };
            for (m, v) in out[start..end].iter_mut().enumerate() {
                let tau = m as f64;
                if tau < len {
                    let env = (PI * tau / len).sin().powi(2);
                    *v = amp * env * (carrier * tau).sin();
                }
            }
        }
        Ok(out)
    }

    fn coupling_for(&self, state: &TouchState) -> Option<(Point, TouchCoupling)> {
        let p = state.position?;
        if state.finger_distance >= 1.0 {
            return None;
        }
        Some((p, TouchCoupling::at_distance(self.leakage.contact_cf, state.finger_distance)))
    }

    /// Number of cycles covering `path`.
    pub fn n_cycles(&self, path: &TouchPath) -> usize {
        ((path.duration() * self.screen.touch_sampling_freq).ceil() as usize).max(1)
    }

    /// Finger state at the midpoint of every cycle of `path`.
    pub fn cycle_states(&self, path: &TouchPath) -> Vec<TouchState> {
        let f = self.screen.touch_sampling_freq;
        (0..self.n_cycles(path))
            .map(|i| path.state_at(path.start() + (i as f64 + 0.5) / f))
            .collect()
    }

    /// Noise-free concatenation of cycles at the reference distance.
    pub fn synth_clean(&self, path: &TouchPath, phase_offset: usize) -> Result<Vec<f64>> {
        let len = self.cycle_len();
        if phase_offset >= len {
            return Err(invalid(format!("phase offset {phase_offset} must be below the cycle length {len}")));
        }
        let states = self.cycle_states(path);
        let mut out = Vec::with_capacity(phase_offset + states.len() * len);
        if phase_offset > 0 {
            let lead = self.synth_cycle(self.coupling_for(&states[0]))?;
            out.extend_from_slice(&lead[len - phase_offset..]);
        }
        // Consecutive identical states share one synthesized cycle.
        let mut cache: Option<(Option<(Point, TouchCoupling)>, Vec<f64>)> = None;
        for st in &states {
            let touch = self.coupling_for(st);
            match &cache {
                Some((key, cycle)) if *key == touch => out.extend_from_slice(cycle),
                _ => {
                    let cycle = self.synth_cycle(touch)?;
                    out.extend_from_slice(&cycle);
                    cache = Some((touch, cycle));
                }
            }
        }
        Ok(out)
    }

    pub fn synth_trace(&self, path: &TouchPath, noise: &NoiseParams, seed: u64) -> Result<EMTrace> {
        self.synth_trace_with_offset(path, noise, seed, 0)
    }

    /// Like [`Simulator::synth_trace`], but the first cycle boundary falls
    /// `phase_offset` samples into the trace.
    pub fn synth_trace_with_offset(
        &self,
        path: &TouchPath,
        noise: &NoiseParams,
        seed: u64,
        phase_offset: usize,
    ) -> Result<EMTrace> {
        noise.validate()?;
        let clean = self.synth_clean(path, phase_offset)?;
        let rms = (clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64).sqrt();
        let atten = noise.attenuation();
        let sigma = if noise.snr_db.is_finite() {
            rms / 10f64.powf(noise.snr_db / 20.0)
        } else {
            0.0
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tones: Vec<(f64, f64, f64)> = noise
            .interferers
            .iter()
            .map(|tone| {
                let phase = rng.gen_range(0.0..2.0 * PI);
                (2.0 * PI * tone.freq_hz / self.sample_rate, tone.relative_amplitude * rms, phase)
            })
            .collect();

        let samples = clean
            .iter()
            .enumerate()
            .map(|(n, &v)| {
                let mut x = v * atten;
                for &(w, a, ph) in &tones {
                    x += a * (w * n as f64 + ph).sin();
                }
                if sigma > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    x += sigma * z;
                }
                x as f32
            })
            .collect();

        let mut trace = EMTrace::new(self.sample_rate, samples)?;
        trace.meta = TraceMeta {
            device: String::new(),
            seed,
            snr_db: noise.snr_db.is_finite().then_some(noise.snr_db),
            distance_cm: Some(noise.distance_cm),
            description: String::new(),
        };
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emsim::screen::DevicePreset;

    fn desk_sim() -> Simulator {
        let screen = ScreenSpec::from_preset(DevicePreset::IphoneX, 8, 4);
        let rate = default_sample_rate(120.0, 448, 20e3);
        Simulator::new(screen, CircuitParams::default(), LeakageModel::default(), rate).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn default_rate_respects_nyquist() {
        assert_eq!(default_sample_rate(120.0, 448, 20e3), 53_760.0);
        assert_eq!(default_sample_rate(60.0, 448, 20e3), 53_760.0);
        assert_eq!(default_sample_rate(180.0, 448, 20e3), 80_640.0);
        assert_eq!(desk_sim().cycle_len(), 448);
    }

    #[test]
    fn nyquist_violation_is_rejected() {
        let r = Simulator::new(ScreenSpec::default(), CircuitParams::default(), LeakageModel::default(), 39_000.0);
        assert!(r.is_err());
    }

    #[test]
    fn idle_cycle_is_deterministic() {
        let sim = desk_sim();
        assert_eq!(sim.synth_cycle(None).unwrap(), sim.synth_cycle(None).unwrap());
    }

    #[test]
    fn touch_raises_cycle_energy() {
        let sim = desk_sim();
        let idle = sim.synth_cycle(None).unwrap();
        let touch = sim
            .synth_cycle(Some((Point::new(0.6, 0.3), TouchCoupling::default())))
            .unwrap();
        assert!(rms(&touch) > 3.0 * rms(&idle));
    }

    #[test]
    fn empty_path_rejected() {
        assert!(TouchPath::new(vec![]).is_err());
        assert!(TouchPath::new(vec![TouchSample::idle(1.0), TouchSample::idle(1.0)]).is_err());
    }

    #[test]
    fn noiseless_trace_is_clean_concatenation() {
        let sim = desk_sim();
        let path = TouchPath::stationary(Point::new(0.2, 0.7), 0.1).unwrap();
        let t = sim.synth_trace(&path, &NoiseParams::noiseless(), 3).unwrap();
        let clean = sim.synth_clean(&path, 0).unwrap();
        assert_eq!(t.len(), clean.len());
        assert_eq!(t.len(), 12 * 448);
        assert!(t.samples.iter().zip(&clean).all(|(a, b)| *a == *b as f32));
    }

    #[test]
    fn trace_is_seed_deterministic() {
        let sim = desk_sim();
        let path = TouchPath::stationary(Point::new(0.2, 0.7), 0.1).unwrap();
        let noise = NoiseParams::with_snr(10.0);
        let a = sim.synth_trace(&path, &noise, 42).unwrap();
        let b = sim.synth_trace(&path, &noise, 42).unwrap();
        let c = sim.synth_trace(&path, &noise, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn phase_offset_prepends_cycle_tail() {
        let sim = desk_sim();
        let path = TouchPath::stationary(Point::new(0.2, 0.7), 0.05).unwrap();
        let t = sim.synth_clean(&path, 100).unwrap();
        let cycle = sim.synth_cycle(Some((Point::new(0.2, 0.7), TouchCoupling::default()))).unwrap();
        assert_eq!(&t[..100], &cycle[348..]);
        assert_eq!(&t[100..548], &cycle[..]);
    }

    #[test]
    fn path_interpolation() {
        let path = TouchPath::new(vec![
            TouchSample::contact(0.0, Point::new(0.0, 0.0)),
            TouchSample::contact(1.0, Point::new(1.0, 0.5)),
        ])
        .unwrap();
        let s = path.state_at(0.5);
        assert_eq!(s.position, Some(Point::new(0.5, 0.25)));
        assert!(s.touching);
        assert_eq!(path.state_at(-1.0).position, Some(Point::new(0.0, 0.0)));
    }
}
