//! Preprocessing: cut a trace into feature cycles, resample each to a fixed
//! length and z-normalize it.

pub mod fvb;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::emsim::EMTrace;
use crate::error::{invalid, Error, Result};
use crate::par::{self, ExecMode};

/// One feature cycle cut from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSegment {
    pub samples: Vec<f64>,
    pub start_index: usize,
    pub cycle_index: usize,
}

/// Result of [`intercept`]: the segments plus what was discarded around them.
#[derive(Debug, Clone, PartialEq)]
pub struct Interception {
    pub segments: Vec<CycleSegment>,
    /// Samples before the first recovered cycle boundary.
    pub head: usize,
    /// Trailing partial cycle.
    pub tail: usize,
    pub cycle_len: usize,
}

impl Interception {
    pub fn phase_offset(&self) -> usize {
        self.head
    }
}

/// A preprocessed, fixed-length model input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub cycle_index: usize,
    /// RMS of the raw segment before normalization (volt).
    pub energy: f64,
    /// Set when the segment was flat and normalized to all zeros.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub touch_sampling_freq: f64,
    pub n_input: usize,
    /// Expected quiet fraction at the start of each scan frame, used for alignment.
    pub sync_gap_fraction: f64,
    /// Segments above this multiple of the 10th-percentile RMS count as high-energy.
    pub energy_ratio: f64,
    /// One untouched cycle, starting at its cycle boundary. When present,
    /// alignment matches against it instead of the sync-gap step template.
    #[serde(skip)]
    pub reference: Option<Arc<[f64]>>,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            touch_sampling_freq: 120.0,
            n_input: 448,
            sync_gap_fraction: 0.2,
            energy_ratio: 3.0,
            reference: None,
            exec: ExecMode::default(),
        }
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Value at quantile `q` (nearest-rank on a sorted copy).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

/// Index of the first cycle-length block whose RMS exceeds `energy_ratio`
/// times the 10th-percentile block RMS, or 0 if none does.
fn first_active_block(x: &[f64], cycle_len: usize, energy_ratio: f64) -> usize {
    let n_blocks = x.len() / cycle_len;
    let block_rms: Vec<f64> = (0..n_blocks).map(|i| rms(&x[i * cycle_len..(i + 1) * cycle_len])).collect();
    let floor = percentile(&block_rms, 0.1);
    block_rms.iter().position(|&r| r > energy_ratio * floor).unwrap_or(0)
}

/// Recovers the cycle phase of a free-running trace.
///
/// Squared samples from the first high-energy segment onward are folded
/// modulo the cycle length. The folded profile is correlated against a step
/// template (quiet sync gap, then the onset of the first scan burst) and the
/// best-scoring lag is the cycle start. A strongly touched slot can pull this
/// estimate off; prefer [`align_to_reference`] when an idle cycle is known.
pub fn align(x: &[f64], cycle_len: usize, sync_gap_fraction: f64, energy_ratio: f64) -> usize {
    if x.len() < cycle_len {
        return 0;
    }
    let first = first_active_block(x, cycle_len, energy_ratio);
    let mut fold = vec![0.0; cycle_len];
    for (n, v) in x[first * cycle_len..].iter().enumerate() {
        fold[n % cycle_len] += v * v;
    }

    let gap = ((cycle_len as f64 * sync_gap_fraction).round() as usize).clamp(1, cycle_len - 1);
    let onset = (gap / 2).clamp(1, cycle_len - gap);
    // Circular prefix sums make each window an O(1) lookup.
    let mut prefix = vec![0.0; 2 * cycle_len + 1];
    for k in 0..2 * cycle_len {
        prefix[k + 1] = prefix[k] + fold[k % cycle_len];
    }
    let window = |start: usize, len: usize| (prefix[start + len] - prefix[start]) / len as f64;
    let mut best = (f64::NEG_INFINITY, 0);
    for phi in 0..cycle_len {
        let score = window(phi + gap, onset) - window(phi, gap);
        if score > best.0 {
            best = (score, phi);
        }
    }
    best.1
}

/// Recovers the cycle phase by matching against an idle `reference` cycle.
///
/// The signed samples are folded, which keeps the per-slot carrier coherent.
/// The reference is cut into short chunks and every chunk with energy is
/// scored by normalized correlation, so a touched slot counts no more than
/// an idle one.
pub fn align_to_reference(x: &[f64], reference: &[f64], energy_ratio: f64) -> usize {
    let len = reference.len();
    if len == 0 || x.len() < len {
        return 0;
    }
    let first = first_active_block(x, len, energy_ratio);
    let mut fold = vec![0.0; len];
    for (n, v) in x[first * len..].iter().enumerate() {
        fold[n % len] += v;
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let width = (len / 32).max(4);
    let mut chunks: Vec<(usize, usize, f64)> = (0..len)
        .step_by(width)
        .map(|s| {
            let e = (s + width).min(len);
            (s, e, norm(&reference[s..e]))
        })
        .collect();
    let loudest = chunks.iter().map(|c| c.2).fold(0.0, f64::max);
    chunks.retain(|c| c.2 > 0.1 * loudest);

    let mut best = (f64::NEG_INFINITY, 0);
    for phi in 0..len {
        let mut score = 0.0;
        for &(s, e, r_norm) in &chunks {
            let (mut dot, mut f2) = (0.0, 0.0);
            for n in s..e {
                let f = fold[(n + phi) % len];
                dot += f * reference[n];
                f2 += f * f;
            }
            if f2 > 0.0 {
                score += dot / (f2.sqrt() * r_norm);
            }
        }
        if score > best.0 {
            best = (score, phi);
        }
    }
    best.1
}

/// Cuts `trace` into consecutive, non-overlapping feature cycles.
pub fn intercept(trace: &EMTrace, config: &PreprocessConfig) -> Result<Interception> {
    if !(config.touch_sampling_freq > 0.0) {
        return Err(invalid("touch_sampling_freq must be > 0"));
    }
    let cycle_len = (trace.sample_rate / config.touch_sampling_freq).round() as usize;
    if cycle_len < 2 {
        return Err(invalid(format!("cycle of {cycle_len} samples is too short")));
    }
    if trace.len() < cycle_len {
        return Err(Error::InsufficientData(format!(
            "trace of {} samples is shorter than one {cycle_len}-sample cycle",
            trace.len()
        )));
    }
    let x: Vec<f64> = trace.samples.iter().map(|&v| v as f64).collect();
    let mut head = match &config.reference {
        Some(r) if r.len() == cycle_len => align_to_reference(&x, r, config.energy_ratio),
        Some(r) => {
            return Err(invalid(format!(
                "reference cycle has {} samples, trace cycles have {cycle_len}",
                r.len()
            )))
        }
        None => align(&x, cycle_len, config.sync_gap_fraction, config.energy_ratio),
    };
    if x.len() - head < cycle_len {
        head = 0;
    }
    let n = (x.len() - head) / cycle_len;
    let segments = (0..n)
        .map(|i| {
            let start = head + i * cycle_len;
            CycleSegment {
                samples: x[start..start + cycle_len].to_vec(),
                start_index: start,
                cycle_index: i,
            }
        })
        .collect();
    Ok(Interception {
        segments,
        head,
        tail: x.len() - head - n * cycle_len,
        cycle_len,
    })
}

/// Linear-interpolation resample onto `n_target` evenly spaced points,
/// keeping both endpoints.
pub fn reshape(samples: &[f64], n_target: usize) -> Result<Vec<f64>> {
    if n_target < 2 {
        return Err(invalid(format!("n_target must be >= 2, got {n_target}")));
    }
    if samples.is_empty() {
        return Err(invalid("cannot resample an empty segment"));
    }
    let n = samples.len();
    if n == n_target {
        return Ok(samples.to_vec());
    }
    if n == 1 {
        return Ok(vec![samples[0]; n_target]);
    }
    let step = (n - 1) as f64 / (n_target - 1) as f64;
    let mut out = Vec::with_capacity(n_target);
    for j in 0..n_target {
        if j == n_target - 1 {
            out.push(samples[n - 1]);
            continue;
        }
        let pos = j as f64 * step;
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        out.push(samples[i] + (samples[i + 1] - samples[i]) * frac);
    }
    Ok(out)
}

/// Z-score with population standard deviation. Flat input maps to zeros with
/// the degenerate flag set.
pub fn znormalize(values: &[f64]) -> FeatureVector {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let energy = rms(values);
    if std < 1e-12 * (mean.abs() + 1.0) {
        return FeatureVector {
            values: vec![0.0; values.len()],
            cycle_index: 0,
            energy,
            degenerate: true,
        };
    }
    let mut out: Vec<f64> = values.iter().map(|v| (v - mean) / std).collect();
    // One refinement pass removes the rounding residue of the first.
    let m2 = out.iter().sum::<f64>() / n;
    let s2 = (out.iter().map(|v| (v - m2) * (v - m2)).sum::<f64>() / n).sqrt();
    for v in out.iter_mut() {
        *v = (*v - m2) / s2;
    }
    FeatureVector {
        values: out,
        cycle_index: 0,
        energy,
        degenerate: false,
    }
}

/// Full preprocessing chain: intercept, reshape, normalize, in cycle order.
pub fn preprocess_stream(trace: &EMTrace, config: &PreprocessConfig) -> Result<Vec<FeatureVector>> {
    let cut = intercept(trace, config)?;
    par::try_map(config.exec, &cut.segments, |seg| {
        let resampled = reshape(&seg.samples, config.n_input)?;
        let mut fv = znormalize(&resampled);
        fv.cycle_index = seg.cycle_index;
        fv.energy = rms(&seg.samples);
        Ok(fv)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(fs: f64, n: usize) -> EMTrace {
        let samples = (0..n).map(|i| ((i as f64) * 0.37).sin() as f32 + 0.1).collect();
        EMTrace::new(fs, samples).unwrap()
    }

    #[test]
    fn exact_tiling_counts() {
        let cfg = PreprocessConfig::default();
        let t = trace(120.0 * 448.0, 120 * 448);
        let cut = intercept(&t, &cfg).unwrap();
        let total: usize = cut.segments.iter().map(|s| s.samples.len()).sum();
        assert_eq!(total + cut.head + cut.tail, t.len());
        assert!(cut.segments.len() == 120 || (cut.head > 0 && cut.segments.len() == 119));

        let cfg60 = PreprocessConfig {
            touch_sampling_freq: 60.0,
            ..PreprocessConfig::default()
        };
        let t = trace(60.0 * 448.0, 30 * 448);
        let cut = intercept(&t, &cfg60).unwrap();
        assert!(cut.segments.len() >= 29);
    }

    #[test]
    fn too_short_trace() {
        let t = trace(120.0 * 448.0, 100);
        assert!(matches!(intercept(&t, &PreprocessConfig::default()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn reshape_identity_and_ramp() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).cos()).collect();
        assert_eq!(reshape(&x, 100).unwrap(), x);
        let ramp: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let up = reshape(&ramp, 200).unwrap();
        assert_eq!(up[0], 0.0);
        assert_eq!(up[199], 1.0);
        for (j, v) in up.iter().enumerate() {
            assert!((v - j as f64 / 199.0).abs() < 1e-12);
        }
        assert!(reshape(&x, 1).is_err());
        assert!(reshape(&[], 10).is_err());
    }

    #[test]
    fn reshape_sinusoid_against_closed_form() {
        let n = 1000;
        let f = |t: f64| (2.0 * std::f64::consts::PI * 3.0 * t).sin();
        let x: Vec<f64> = (0..n).map(|i| f(i as f64 / (n - 1) as f64)).collect();
        let y = reshape(&x, 445).unwrap();
        let worst = y
            .iter()
            .enumerate()
            .map(|(j, v)| (v - f(j as f64 / 444.0)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn znormalize_cases() {
        let fv = znormalize(&[1.0, 2.0, 3.0]);
        let z = 1.5f64.sqrt();
        assert!((fv.values[0] + z).abs() < 1e-12);
        assert!(fv.values[1].abs() < 1e-12);
        assert!((fv.values[2] - z).abs() < 1e-12);
        let flat = znormalize(&[4.0; 16]);
        assert!(flat.degenerate);
        assert!(flat.values.iter().all(|&v| v == 0.0));
    }
}
