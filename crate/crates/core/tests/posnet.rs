use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use touchleak::posnet::{
    conv_out_len, evaluate, forward, loss_and_grad, predict, softmax, train, Dataset, GridLabel, ModelConfig,
    Parameters, TrainConfig,
};
use touchleak::ExecMode;

fn random_inputs(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

/// Central differences on every tensor, `per_tensor` random coordinates each.
/// Returns the worst relative error per tensor name.
fn gradient_check(per_tensor: usize, seed: u64) -> Vec<(String, f64)> {
    let cfg = ModelConfig::tiny(5);
    let mut p = Parameters::<f64>::init(&cfg, seed).unwrap();
    // Non-trivial norm and bias values so their gradients are exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    for v in p.data.iter_mut() {
        *v += rng.gen_range(-0.1..0.1);
    }
    let xs = random_inputs(3, cfg.n_input, seed + 1);
    let inputs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let labels = [0usize, 3, 4];
    let analytic = loss_and_grad(&p, &inputs, &labels, ExecMode::Sequential).unwrap().grads;

    let h = 1e-5;
    let layout = p.layout.clone();
    let mut worst = Vec::new();
    for (ti, spec) in layout.tensors.iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        for _ in 0..per_tensor {
            let k = spec.offset + rng.gen_range(0..spec.len);
            let orig = p.data[k];
            p.data[k] = orig + h;
            let lp = loss_and_grad(&p, &inputs, &labels, ExecMode::Sequential).unwrap().loss;
            p.data[k] = orig - h;
            let lm = loss_and_grad(&p, &inputs, &labels, ExecMode::Sequential).unwrap().loss;
            p.data[k] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic.data[k];
            // The floor keeps near-zero gradients from turning round-off into "relative" error.
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
        let _ = ti;
        worst.push((spec.name.clone(), max_rel));
    }
    worst
}

#[test]
fn finite_difference_gradients_match() {
    let worst = gradient_check(50, 11);
    let bad: Vec<_> = worst.iter().filter(|(_, e)| *e >= 1e-5).collect();
    assert!(bad.is_empty(), "gradient mismatches: {bad:?}");
}

#[test]
fn uniform_logits_give_log_n_class() {
    let cfg = ModelConfig::tiny(480);
    let p = Parameters::<f64>::zeros(&cfg).unwrap();
    let x = vec![0.5; cfg.n_input];
    let g = loss_and_grad(&p, &[&x], &[17], ExecMode::Sequential).unwrap();
    assert!((g.loss - 480f64.ln()).abs() < 1e-12);
    assert!((g.loss - 6.1738).abs() < 1e-4);
}

#[test]
fn duplicated_sample_doubles_its_contribution() {
    let cfg = ModelConfig::tiny(4);
    let p = Parameters::<f64>::init(&cfg, 3).unwrap();
    let xs = random_inputs(2, cfg.n_input, 9);
    let single = loss_and_grad(&p, &[&xs[0]], &[1], ExecMode::Sequential).unwrap().grads;
    let pair = loss_and_grad(&p, &[&xs[0], &xs[0]], &[1, 1], ExecMode::Sequential).unwrap().grads;
    // Mean over a batch of two copies equals the single-sample gradient, i.e.
    // each copy contributes half, and the summed contribution is twice one copy's.
    let half = loss_and_grad(&p, &[&xs[0], &xs[1]], &[1, 2], ExecMode::Sequential).unwrap().grads;
    let other = loss_and_grad(&p, &[&xs[1]], &[2], ExecMode::Sequential).unwrap().grads;
    for k in 0..p.len() {
        assert!((pair.data[k] - single.data[k]).abs() <= 1e-12 * (1.0 + single.data[k].abs()));
        let recon = 0.5 * (single.data[k] + other.data[k]);
        assert!((half.data[k] - recon).abs() <= 1e-12 * (1.0 + recon.abs()));
    }
}

#[test]
fn parallel_and_sequential_gradients_are_identical() {
    let cfg = ModelConfig::tiny(4);
    let p = Parameters::<f32>::init(&cfg, 5).unwrap();
    let xs = random_inputs(21, cfg.n_input, 2);
    let xf: Vec<Vec<f32>> = xs.iter().map(|v| v.iter().map(|&a| a as f32).collect()).collect();
    let inputs: Vec<&[f32]> = xf.iter().map(|v| v.as_slice()).collect();
    let labels: Vec<usize> = (0..21).map(|i| i % 4).collect();
    let a = loss_and_grad(&p, &inputs, &labels, ExecMode::Sequential).unwrap();
    let b = loss_and_grad(&p, &inputs, &labels, ExecMode::Parallel).unwrap();
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert!(a.grads.data.iter().zip(&b.grads.data).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn full_scale_shapes() {
    let cfg = ModelConfig::full(480);
    assert_eq!(cfg.n_input, 1791);
    let p = Parameters::<f32>::init(&cfg, 0).unwrap();
    let x: Vec<f32> = random_inputs(1, cfg.n_input, 1)[0].iter().map(|&v| v as f32).collect();
    let out = forward(&p, &[&x], ExecMode::Sequential).unwrap();
    assert_eq!(out.shapes.conv, (256, 445));
    assert_eq!(out.shapes.encoder, (445, 256));
    assert_eq!(out.shapes.pooled, 256);
    assert_eq!(out.shapes.logits, 480);
    let logits: Vec<f64> = out.logits.row(0).iter().map(|&v| v as f64).collect();
    assert!((softmax(&logits).iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let w: f64 = out.pool_weights[0].iter().map(|&v| v as f64).sum();
    assert!((w - 1.0).abs() < 1e-6);
    assert_eq!(cfg.head_dim(), 32);
}

#[test]
fn stride_arithmetic_admits_exactly_four_lengths() {
    // Exhaustive search, written independently of ModelConfig::seq_len.
    let admitted: Vec<usize> = (1..20_000)
        .filter(|&n| n >= 7)
        .filter(|&n| {
            let l1 = (n - 7) / 2 + 1;
            l1 >= 5 && (l1 - 5) / 2 + 1 == 445
        })
        .collect();
    assert_eq!(admitted, vec![1791, 1792, 1793, 1794]);
    for n in admitted {
        let l1 = conv_out_len(n, 7, 2).unwrap();
        assert_eq!(conv_out_len(l1, 5, 2), Some(445));
    }
}

#[test]
fn desk_parameter_count_matches_closed_form() {
    let cfg = ModelConfig::desk(32);
    let p = Parameters::<f32>::zeros(&cfg).unwrap();
    let (d, ff, c1) = (64usize, 256usize, 64usize);
    let conv = (7 + 1) * c1 + (5 * c1 * d + d);
    let layer = 2 * d + 4 * (d * d + d) + 2 * d + (d * ff + ff) + (ff * d + d);
    let final_ln = 2 * d;
    let pool = (d * 128 + 128) + (128 + 1);
    let head = (d * 512 + 512) + (512 * 256 + 256) + (256 * 32 + 32);
    assert_eq!(p.len(), conv + 2 * layer + final_ln + pool + head);
}

#[test]
fn init_is_reproducible() {
    let cfg = ModelConfig::desk(32);
    let a = Parameters::<f32>::init(&cfg, 42).unwrap();
    let b = Parameters::<f32>::init(&cfg, 42).unwrap();
    let c = Parameters::<f32>::init(&cfg, 43).unwrap();
    assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(a.data, c.data);
}

#[test]
fn predict_decodes_row_major() {
    let g = GridLabel::from_index(17, 32, 15).unwrap();
    assert_eq!((g.row, g.col), (1, 2));
    let cfg = ModelConfig::tiny(6);
    let p = Parameters::<f32>::init(&cfg, 1).unwrap();
    let x = vec![0.1f32; cfg.n_input];
    let (label, conf) = predict(&p, &x, 2, 3).unwrap();
    assert!(label.index < 6 && (0.0..=1.0).contains(&conf));
    assert!(predict(&p, &x, 3, 3).is_err());
}

fn toy_dataset(cfg: &ModelConfig, n: usize, seed: u64) -> Dataset<f32> {
    // Two classes: a pulse in the first or second half of the window.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Dataset::new(cfg.n_input);
    for i in 0..n {
        let label = i % 2;
        let centre = if label == 0 { 10.0 } else { 30.0 };
        let v: Vec<f64> = (0..cfg.n_input)
            .map(|t| (-((t as f64 - centre) / 3.0).powi(2)).exp() * 3.0 + rng.gen_range(-0.2..0.2))
            .collect();
        d.push(&v, label).unwrap();
    }
    d
}

#[test]
fn toy_problem_is_learned_and_separable_by_centroids() {
    let cfg = ModelConfig::tiny(2);
    let data = toy_dataset(&cfg, 64, 7);
    // Nearest-centroid oracle first: the task must be separable.
    let mut cent = [vec![0.0f64; cfg.n_input], vec![0.0f64; cfg.n_input]];
    for i in 0..data.len() {
        for (c, &v) in cent[data.labels[i]].iter_mut().zip(data.row(i)) {
            *c += v as f64 / 32.0;
        }
    }
    let nc_correct = (0..data.len())
        .filter(|&i| {
            let d = |c: &Vec<f64>| c.iter().zip(data.row(i)).map(|(a, &b)| (a - b as f64).powi(2)).sum::<f64>();
            usize::from(d(&cent[1]) < d(&cent[0])) == data.labels[i]
        })
        .count();
    assert_eq!(nc_correct, data.len());

    let cfg_t = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 16,
        epochs: 20,
        seed: 1,
        ..TrainConfig::default()
    };
    let p = Parameters::<f32>::init(&cfg, 3).unwrap();
    let (p, hist) = train(p, &data, None, &cfg_t).unwrap();
    assert_eq!(hist.len(), 20);
    assert!(hist.last().unwrap().train_acc >= 0.99, "{hist:?}");
    assert!(evaluate(&p, &data, ExecMode::Sequential).unwrap().accuracy >= 0.99);
}

#[test]
fn training_is_deterministic_and_lr_zero_is_inert() {
    let cfg = ModelConfig::tiny(2);
    let data = toy_dataset(&cfg, 24, 8);
    let tc = TrainConfig {
        batch_size: 8,
        epochs: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let p0 = Parameters::<f32>::init(&cfg, 4).unwrap();
    let (a, ha) = train(p0.clone(), &data, Some(&data), &tc).unwrap();
    let (b, hb) = train(p0.clone(), &data, Some(&data), &tc).unwrap();
    assert_eq!(ha, hb);
    assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));

    let frozen = TrainConfig {
        learning_rate: 0.0,
        ..tc
    };
    let (c, hc) = train(p0.clone(), &data, None, &frozen).unwrap();
    assert!(c.data.iter().zip(&p0.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(hc.windows(2).all(|w| w[0].loss == w[1].loss && w[0].train_acc == w[1].train_acc));
}
