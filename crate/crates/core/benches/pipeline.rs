use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use touchleak::emsim::{NoiseParams, TouchPath};
use touchleak::harness::ExperimentConfig;
use touchleak::posnet::{forward, loss_and_grad, ModelConfig, Parameters};
use touchleak::sigproc::preprocess_stream;
use touchleak::{ExecMode, Point};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn batch(n_input: usize, n: usize) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..n).map(|_| (0..n_input).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

fn model(c: &mut Criterion) {
    let cfg = ModelConfig::desk(32);
    let p = Parameters::<f32>::init(&cfg, 0).unwrap();
    let xs = batch(cfg.n_input, 32);
    let inputs: Vec<&[f32]> = xs.iter().map(|v| v.as_slice()).collect();
    let labels: Vec<usize> = (0..32).collect();
    let mut g = c.benchmark_group("desk_model_batch32");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::new("forward", name), &mode, |b, &m| {
            b.iter(|| forward(&p, &inputs, m).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("loss_and_grad", name), &mode, |b, &m| {
            b.iter(|| loss_and_grad(&p, &inputs, &labels, m).unwrap())
        });
    }
    g.finish();
}

fn preprocessing(c: &mut Criterion) {
    let config = ExperimentConfig::desk();
    let sim = config.simulator().unwrap();
    let path = TouchPath::stationary(Point::new(0.4, 0.6), 2.0).unwrap();
    let trace = sim.synth_trace(&path, &NoiseParams::with_snr(20.0), 1).unwrap();
    let mut g = c.benchmark_group("preprocess_2s_trace");
    for (name, mode) in MODES {
        let mut pre = config.preprocess().unwrap();
        pre.exec = mode;
        g.bench_function(name, |b| b.iter(|| preprocess_stream(&trace, &pre).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, model, preprocessing);
criterion_main!(benches);
