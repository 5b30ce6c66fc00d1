use touchleak::emsim::{
    default_sample_rate, CircuitParams, DevicePreset, LeakageModel, NoiseParams, ScreenSpec, Simulator, TouchPath,
    TouchSample,
};
use touchleak::sigproc::{intercept, percentile, preprocess_stream, PreprocessConfig};
use touchleak::{ExecMode, Point};

fn sim() -> Simulator {
    let screen = ScreenSpec::from_preset(DevicePreset::IphoneX, 8, 4);
    let rate = default_sample_rate(120.0, 448, 20e3);
    Simulator::new(screen, CircuitParams::default(), LeakageModel::default(), rate).unwrap()
}

fn circular_gap(a: usize, b: usize, len: usize) -> usize {
    let d = a.abs_diff(b) % len;
    d.min(len - d)
}

fn pre(s: &Simulator) -> PreprocessConfig {
    PreprocessConfig {
        reference: Some(s.synth_cycle(None).unwrap().into()),
        ..PreprocessConfig::default()
    }
}

#[test]
fn one_second_trace_gives_120_cycles() {
    let s = sim();
    let path = TouchPath::stationary(Point::new(0.3, 0.4), 1.0).unwrap();
    let trace = s.synth_trace(&path, &NoiseParams::noiseless(), 0).unwrap();
    let cut = intercept(&trace, &pre(&s)).unwrap();
    assert_eq!(cut.head, 0);
    assert_eq!(cut.segments.len(), 120);
    assert_eq!(cut.tail, 0);
}

#[test]
fn recovers_phase_offset() {
    let s = sim();
    let path = TouchPath::stationary(Point::new(0.7, 0.2), 0.3).unwrap();
    for (offset, snr) in [(1, f64::INFINITY), (100, 20.0), (250, 20.0), (447, 20.0), (180, 10.0)] {
        let trace = s.synth_trace_with_offset(&path, &NoiseParams::with_snr(snr), 9, offset).unwrap();
        let cut = intercept(&trace, &pre(&s)).unwrap();
        assert!(circular_gap(cut.head, offset, 448) <= 2, "offset {offset}: recovered {}", cut.head);
    }
}

#[test]
fn energy_marks_touched_cycles() {
    let s = sim();
    let p = Point::new(0.4, 0.6);
    let f = 120.0;
    let path = TouchPath::new(vec![
        TouchSample::idle(0.0),
        TouchSample::contact(10.0 / f, p),
        TouchSample::contact(20.9 / f, p),
        TouchSample::idle(21.0 / f),
        TouchSample::idle(40.0 / f),
    ])
    .unwrap();
    let trace = s.synth_trace(&path, &NoiseParams::with_snr(20.0), 4).unwrap();
    let fv = preprocess_stream(&trace, &pre(&s)).unwrap();
    assert_eq!(fv.len(), 40);
    let energies: Vec<f64> = fv.iter().map(|v| v.energy).collect();
    let floor = percentile(&energies, 0.1);
    for (i, e) in energies.iter().enumerate() {
        let touched = (10..=20).contains(&i);
        assert_eq!(*e > 2.0 * floor, touched, "cycle {i}: {e} vs floor {floor}");
    }
}

#[test]
fn idle_trace_at_20_db_has_no_high_energy_cycles() {
    let s = sim();
    let trace = s
        .synth_trace(&TouchPath::idle(0.5).unwrap(), &NoiseParams::with_snr(20.0), 8)
        .unwrap();
    let fv = preprocess_stream(&trace, &pre(&s)).unwrap();
    let energies: Vec<f64> = fv.iter().map(|v| v.energy).collect();
    let floor = percentile(&energies, 0.1);
    assert!(energies.iter().all(|&e| e < 2.0 * floor));
}

#[test]
fn parallel_and_sequential_agree() {
    let s = sim();
    let path = TouchPath::stationary(Point::new(0.9, 0.9), 0.5).unwrap();
    let trace = s.synth_trace(&path, &NoiseParams::with_snr(15.0), 1).unwrap();
    let seq = PreprocessConfig {
        exec: ExecMode::Sequential,
        ..pre(&s)
    };
    let par = PreprocessConfig {
        exec: ExecMode::Parallel,
        ..pre(&s)
    };
    assert_eq!(preprocess_stream(&trace, &seq).unwrap(), preprocess_stream(&trace, &par).unwrap());
}

#[test]
fn features_are_normalized() {
    let s = sim();
    let path = TouchPath::stationary(Point::new(0.1, 0.5), 0.2).unwrap();
    let trace = s.synth_trace(&path, &NoiseParams::with_snr(20.0), 2).unwrap();
    for fv in preprocess_stream(&trace, &pre(&s)).unwrap() {
        let n = fv.values.len() as f64;
        let mean = fv.values.iter().sum::<f64>() / n;
        let sd = (fv.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-6);
    }
}

#[test]
fn reference_length_must_match_cycle() {
    let s = sim();
    let trace = s
        .synth_trace(&TouchPath::idle(0.2).unwrap(), &NoiseParams::noiseless(), 0)
        .unwrap();
    let cfg = PreprocessConfig {
        reference: Some(vec![0.0; 100].into()),
        ..PreprocessConfig::default()
    };
    assert!(intercept(&trace, &cfg).is_err());
}

#[test]
fn alignment_holds_for_every_zone() {
    let s = sim();
    let cfg = pre(&s);
    for zone in 0..32 {
        let p = s.screen.zone_center(zone / 4, zone % 4);
        let path = TouchPath::stationary(p, 0.2).unwrap();
        let offset = (zone * 37) % 448;
        let trace = s.synth_trace_with_offset(&path, &NoiseParams::with_snr(20.0), zone as u64, offset).unwrap();
        let cut = intercept(&trace, &cfg).unwrap();
        assert!(circular_gap(cut.head, offset, 448) <= 2, "zone {zone}: {} vs {offset}", cut.head);
    }
}
