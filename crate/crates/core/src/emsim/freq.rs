use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::synth::EMTrace;
use crate::error::{Error, Result};

/// Search band for the cyclical-feature frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySearch {
    pub min_hz: f64,
    pub max_hz: f64,
    /// Normalized autocorrelation below which the estimate is rejected.
    pub min_confidence: f64,
    /// Peaks within this fraction of the strongest are treated as harmonics
    /// of one another; the shortest lag wins.
    pub harmonic_tolerance: f64,
}

impl Default for FrequencySearch {
    fn default() -> Self {
        Self {
            min_hz: 20.0,
            max_hz: 500.0,
            min_confidence: 0.3,
            harmonic_tolerance: 0.97,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub hz: f64,
    /// Normalized autocorrelation at the chosen lag, in `[-1, 1]`.
    pub confidence: f64,
    pub period_samples: f64,
}

/// Unbiased autocorrelation of a mean-removed signal for lags `0..=max_lag`,
/// computed through the FFT.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / size as f64;
    (0..=max_lag.min(n - 1))
        .map(|lag| buf[lag].re * scale / (n - lag) as f64)
        .collect()
}

pub fn cyclical_feature_frequency(trace: &EMTrace) -> Result<FrequencyEstimate> {
    estimate_frequency(trace, &FrequencySearch::default())
}

/// Estimates the repetition rate of the leaked cycle from the autocorrelation peak.
pub fn estimate_frequency(trace: &EMTrace, search: &FrequencySearch) -> Result<FrequencyEstimate> {
    let fs = trace.sample_rate;
    let min_lag = (fs / search.max_hz).floor().max(2.0) as usize;
    let max_lag = (fs / search.min_hz).ceil() as usize;
    if trace.len() < 10 * min_lag {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot hold 10 cycles at {} Hz",
            trace.len(),
            search.max_hz
        )));
    }
    let x: Vec<f64> = trace.samples.iter().map(|&v| v as f64).collect();
    let max_lag = max_lag.min(x.len() / 10);
    let r = autocorrelation(&x, max_lag + 1);
    if r[0] <= 0.0 {
        return Err(Error::LowConfidence("trace has no energy".into()));
    }
    let norm: Vec<f64> = r.iter().map(|v| v / r[0]).collect();

    let peaks: Vec<usize> = (min_lag.max(1)..norm.len() - 1)
        .filter(|&k| norm[k] >= norm[k - 1] && norm[k] > norm[k + 1])
        .collect();
    let best = peaks
        .iter()
        .copied()
        .max_by(|&a, &b| norm[a].total_cmp(&norm[b]))
        .ok_or_else(|| Error::LowConfidence("no autocorrelation peak in band".into()))?;
    let first = peaks
        .iter()
        .copied()
        .find(|&k| norm[k] >= search.harmonic_tolerance * norm[best])
        .unwrap_or(best);
    // Carrier ripple puts several near-equal peaks around each cycle lag;
    // take the strongest of the cluster.
    let reach = (first as f64 * 0.05).ceil() as usize;
    let chosen = peaks
        .iter()
        .copied()
        .filter(|&k| k + reach >= first && k <= first + reach)
        .max_by(|&a, &b| norm[a].total_cmp(&norm[b]))
        .unwrap_or(first);
    let confidence = norm[chosen];
    if confidence < search.min_confidence {
        return Err(Error::LowConfidence(format!(
            "best periodicity {confidence:.3} below threshold {}",
            search.min_confidence
        )));
    }
    if trace.len() < 10 * chosen {
        return Err(Error::InsufficientData(format!(
            "{} samples cover fewer than 10 cycles of {chosen} samples",
            trace.len()
        )));
    }

    // Parabolic refinement of the peak.
    let (a, b, c) = (norm[chosen - 1], norm[chosen], norm[chosen + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-15 { 0.5 * (a - c) / denom } else { 0.0 };
    let period = chosen as f64 + shift.clamp(-0.5, 0.5);
    Ok(FrequencyEstimate {
        hz: fs / period,
        confidence,
        period_samples: period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocorrelation_matches_direct_sum() {
        let x: Vec<f64> = (0..97).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let r = autocorrelation(&x, 20);
        for (lag, got) in r.iter().enumerate() {
            let direct: f64 = (0..x.len() - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>()
                / (x.len() - lag) as f64;
            assert!((got - direct).abs() < 1e-10, "lag {lag}");
        }
    }

    #[test]
    fn pulse_train_period() {
        let fs = 10_000.0;
        let samples: Vec<f32> = (0..20_000).map(|i| if i % 125 < 10 { 1.0 } else { 0.0 }).collect();
        let t = EMTrace::new(fs, samples).unwrap();
        let est = cyclical_feature_frequency(&t).unwrap();
        assert!((est.hz - 80.0).abs() < 0.5, "{est:?}");
    }

    #[test]
    fn short_trace_rejected() {
        let t = EMTrace::new(10_000.0, vec![0.5; 50]).unwrap();
        assert!(matches!(cyclical_feature_frequency(&t), Err(Error::InsufficientData(_))));
    }
}
