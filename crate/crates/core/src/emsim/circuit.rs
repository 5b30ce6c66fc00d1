//! Lumped-element model of one TX/RX electrode pair.
//!
//! Without a finger the pair is a series divider `R_TX + R_RX + 1/(jωC0)`.
//! A finger adds a capacitance `ΔC_f` to ground that shunts the RX half of
//! the mutual capacitance, lowering the load impedance and raising the
//! driving voltage seen on the TX line.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// TX line resistance (ohm).
    pub r_tx: f64,
    /// RX line resistance (ohm).
    pub r_rx: f64,
    /// Mutual capacitance between crossing electrodes (farad).
    pub c0: f64,
    /// Excitation amplitude (volt).
    pub v_tx_amplitude: f64,
    /// Excitation carrier frequency (hertz).
    pub excitation_freq: f64,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            r_tx: 100.0,
            r_rx: 1_000.0,
            c0: 10e-12,
            v_tx_amplitude: 1.0,
            excitation_freq: 20e3,
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("r_tx", self.r_tx),
            ("r_rx", self.r_rx),
            ("c0", self.c0),
            ("v_tx_amplitude", self.v_tx_amplitude),
            ("excitation_freq", self.excitation_freq),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Finger coupling state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchCoupling {
    /// Coupling capacitance at contact (farad).
    pub delta_cf: f64,
    /// Normalized approach distance, 0 = contact, 1 = out of range.
    pub finger_distance: f64,
}

impl Default for TouchCoupling {
    fn default() -> Self {
        Self::contact(DEFAULT_CONTACT_CF)
    }
}

/// Coupling capacitance of a fingertip in full contact (farad).
pub const DEFAULT_CONTACT_CF: f64 = 1e-12;

impl TouchCoupling {
    pub fn contact(delta_cf: f64) -> Self {
        Self {
            delta_cf,
            finger_distance: 0.0,
        }
    }

    pub fn at_distance(delta_cf: f64, finger_distance: f64) -> Self {
        Self {
            delta_cf,
            finger_distance,
        }
    }

    /// `ΔC_f · (1 - d)²`, zero once the finger is out of range.
    pub fn effective_delta_cf(&self) -> f64 {
        let d = self.finger_distance.clamp(0.0, 1.0);
        self.delta_cf * (1.0 - d) * (1.0 - d)
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta_cf.is_finite() && self.delta_cf >= 0.0) {
            return Err(invalid(format!("delta_cf must be >= 0, got {}", self.delta_cf)));
        }
        if !(0.0..=1.0).contains(&self.finger_distance) {
            return Err(invalid(format!(
                "finger_distance must lie in [0, 1], got {}",
                self.finger_distance
            )));
        }
        Ok(())
    }
}

fn check_freq(f: f64) -> Result<()> {
    if f.is_finite() && f > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("frequency must be > 0, got {f}")))
    }
}

/// Driving voltage with no finger present.
pub fn driving_voltage_idle(circuit: &CircuitParams, f: f64) -> Result<Complex64> {
    circuit.validate()?;
    check_freq(f)?;
    let zc = 1.0 / (J * 2.0 * PI * f * circuit.c0);
    let denom = circuit.r_tx + circuit.r_rx + zc;
    Ok(circuit.v_tx_amplitude * circuit.r_tx / denom)
}

/// Load impedance change: the finger branch `1/(jωΔC_f)` in parallel with
/// `R_RX + 1/(j2ωC0)`. Returns the RX branch unchanged when there is no coupling.
pub fn delta_impedance(circuit: &CircuitParams, f: f64, coupling: &TouchCoupling) -> Result<Complex64> {
    circuit.validate()?;
    check_freq(f)?;
    coupling.validate()?;
    let z_rx = circuit.r_rx + 1.0 / (J * 4.0 * PI * f * circuit.c0);
    let dcf = coupling.effective_delta_cf();
    if dcf == 0.0 {
        return Ok(z_rx);
    }
    // Finger branch as an admittance avoids an infinite intermediate for tiny ΔC_f.
    let y_finger = J * 2.0 * PI * f * dcf;
    Ok(1.0 / (y_finger + 1.0 / z_rx))
}

/// Driving voltage with a finger coupled to the electrode pair.
pub fn driving_voltage_touch(circuit: &CircuitParams, f: f64, coupling: &TouchCoupling) -> Result<Complex64> {
    let dz = delta_impedance(circuit, f, coupling)?;
    let denom = circuit.r_tx + 1.0 / (J * 4.0 * PI * f * circuit.c0) + dz;
    Ok(circuit.v_tx_amplitude * circuit.r_tx / denom)
}

/// `|V_touch| / |V_idle|` at the circuit's own excitation frequency.
pub fn coupling_ratio(circuit: &CircuitParams, coupling: &TouchCoupling) -> Result<f64> {
    let f = circuit.excitation_freq;
    Ok(driving_voltage_touch(circuit, f, coupling)?.norm() / driving_voltage_idle(circuit, f)?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_circuit() -> CircuitParams {
        CircuitParams {
            r_tx: 100.0,
            r_rx: 1_000.0,
            c0: 10e-12,
            v_tx_amplitude: 1.0,
            excitation_freq: 100e3,
        }
    }

    fn assert_close(a: Complex64, re: f64, im: f64) {
        let expect = Complex64::new(re, im);
        let rel = (a - expect).norm() / expect.norm();
        assert!(rel < 1e-12, "{a} vs {expect} (rel {rel:e})");
    }

    // Golden values frozen from a 40-digit mpmath evaluation of the same circuit.
    #[test]
    fn golden_idle() {
        let v = driving_voltage_idle(&golden_circuit(), 100e3).unwrap();
        assert_close(v, 4.342_418_503_987_871e-6, 6.282_885_180_758_026e-4);
        assert!(v.norm() < 1.0);
    }

    #[test]
    fn golden_delta_impedance() {
        let z = delta_impedance(&golden_circuit(), 100e3, &TouchCoupling::contact(1e-12)).unwrap();
        assert_close(z, 907.029_153_668_247_5, -75_788.610_903_974_11);
    }

    #[test]
    fn golden_touch() {
        let v = driving_voltage_touch(&golden_circuit(), 100e3, &TouchCoupling::contact(1e-12)).unwrap();
        assert_close(v, 4.171_683_658_788_893e-6, 6.436_140_849_800_134e-4);
    }

    #[test]
    fn large_capacitance_limits() {
        let mut c = golden_circuit();
        c.c0 = 1.0;
        c.r_rx = 1e-300;
        let v = driving_voltage_idle(&c, 100e3).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-9);

        c.r_rx = c.r_tx;
        let v = driving_voltage_idle(&c, 100e3).unwrap();
        assert!((v.norm() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_coupling_is_the_rx_branch() {
        let c = golden_circuit();
        let z = delta_impedance(&c, 50e3, &TouchCoupling::contact(0.0)).unwrap();
        assert_eq!(z, c.r_rx + 1.0 / (J * 4.0 * PI * 50e3 * c.c0));
        let far = delta_impedance(&c, 50e3, &TouchCoupling::at_distance(1e-12, 1.0)).unwrap();
        assert_eq!(far, z);
    }

    #[test]
    fn huge_coupling_shorts_the_load() {
        let z = delta_impedance(&golden_circuit(), 100e3, &TouchCoupling::contact(1.0)).unwrap();
        assert!(z.norm() < 1e-5);
    }

    #[test]
    fn zero_coupling_matches_idle() {
        let c = golden_circuit();
        let idle = driving_voltage_idle(&c, 100e3).unwrap();
        let touch = driving_voltage_touch(&c, 100e3, &TouchCoupling::contact(0.0)).unwrap();
        assert!((idle.norm() - touch.norm()).abs() <= 1e-12 * idle.norm());
    }

    #[test]
    fn rejects_bad_parameters() {
        let c = golden_circuit();
        assert!(driving_voltage_idle(&c, 0.0).is_err());
        assert!(driving_voltage_idle(&c, -3.0).is_err());
        let mut bad = c;
        bad.c0 = 0.0;
        assert!(driving_voltage_idle(&bad, 1e3).is_err());
        assert!(delta_impedance(&c, 1e3, &TouchCoupling::contact(-1e-12)).is_err());
    }

    // |V_touch| over ΔC_f ∈ [0, 5 pF] at the default 20 kHz operating point,
    // frozen from the mpmath oracle.
    const DEFAULT_SWEEP: [f64; 11] = [
        1.256_635_860_874_604_7e-4,
        1.272_149_865_964_298_2e-4,
        1.287_285_484_345_208_4e-4,
        1.302_056_392_353_171_9e-4,
        1.316_475_615_097_509_8e-4,
        1.330_555_564_765_395_1e-4,
        1.344_308_076_254_220_9e-4,
        1.357_744_440_346_898e-4,
        1.370_875_434_625_483_8e-4,
        1.383_711_352_300_982_8e-4,
        1.396_262_029_121_368_4e-4,
    ];

    #[test]
    fn default_sweep_matches_golden_and_is_monotone() {
        let c = CircuitParams::default();
        let mut prev = 0.0;
        for (k, want) in DEFAULT_SWEEP.iter().enumerate() {
            let dcf = k as f64 * 0.5e-12;
            let got = driving_voltage_touch(&c, c.excitation_freq, &TouchCoupling::contact(dcf))
                .unwrap()
                .norm();
            assert!((got - want).abs() < 1e-12 * want, "k={k}: {got} vs {want}");
            assert!(got >= prev);
            prev = got;
        }
    }
}
