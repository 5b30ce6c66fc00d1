//! Forward and backward passes.
//!
//! Pipeline per sample: two strided convolutions (ReLU between) -> sinusoidal
//! positional encoding -> pre-norm encoder layers -> final layer norm ->
//! attention pooling -> three-layer classifier. Gradients are derived by hand
//! and checked against finite differences in the test suite.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, ShapeBuilder};

use super::config::{GridLabel, ModelConfig};
use super::params::Parameters;
use super::Real;
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};

const LN_EPS: f64 = 1e-5;
/// Samples per gradient work unit. Chunk partials are summed in chunk order,
/// so results do not depend on how chunks are scheduled.
pub const GRAD_CHUNK: usize = 8;

/// Fixed sinusoidal positional encoding, `(len, d_model)`.
pub fn positional_encoding<T: Real>(len: usize, d_model: usize) -> Array2<T> {
    Array2::from_shape_fn((len, d_model), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d_model as f64);
        T::from_f64(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

struct LnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    a: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    o: Array2<T>,
    ln2: LnCache<T>,
    b: Array2<T>,
    f_pre: Array2<T>,
}

struct SampleCache<T> {
    h1_pre: Array2<T>,
    h1: Array2<T>,
    layers: Vec<LayerCache<T>>,
    final_ln: LnCache<T>,
    z: Array2<T>,
    u_pre: Array2<T>,
    alpha: Array1<T>,
    pooled: Array1<T>,
    c1_pre: Array1<T>,
    c2_pre: Array1<T>,
    logits: Array1<T>,
}

fn relu<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

fn relu_mask<T: Real>(grad: &mut Array2<T>, pre: &Array2<T>) {
    grad.zip_mut_with(pre, |g, &p| {
        if p <= T::zero() {
            *g = T::zero();
        }
    });
}

fn softmax_in_place<T: Real>(mut row: ndarray::ArrayViewMut1<'_, T>) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.mapv_inplace(|v| v / sum);
}

/// Softmax of a logit vector, computed in `f64`.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn add_bias<T: Real>(m: &mut Array2<T>, b: ArrayView1<'_, T>) {
    for mut row in m.rows_mut() {
        row += &b;
    }
}

fn layer_norm<T: Real>(x: &Array2<T>, gamma: ArrayView1<'_, T>, beta: ArrayView1<'_, T>) -> (Array2<T>, LnCache<T>) {
    let d = T::from_f64(x.ncols() as f64);
    let eps = T::from_f64(LN_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().fold(T::zero(), |a, &v| a + v * v) / d;
        *inv = T::one() / (var + eps).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let mut y = xhat.clone();
    for mut row in y.rows_mut() {
        row.zip_mut_with(&gamma, |v, &g| *v *= g);
        row += &beta;
    }
    (y, LnCache { xhat, inv_std })
}

/// Backward through layer norm; accumulates parameter gradients and returns dx.
fn layer_norm_back<T: Real>(
    dy: &Array2<T>,
    cache: &LnCache<T>,
    gamma: ArrayView1<'_, T>,
    grads: &mut Parameters<T>,
    gamma_id: usize,
    beta_id: usize,
) -> Array2<T> {
    {
        let mut dg = grads.vec_mut(gamma_id);
        dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    }
    {
        let mut db = grads.vec_mut(beta_id);
        db += &dy.sum_axis(Axis(0));
    }
    let d = T::from_f64(dy.ncols() as f64);
    let mut dx = Array2::zeros(dy.raw_dim());
    for t in 0..dy.nrows() {
        let dxhat = &dy.row(t) * &gamma;
        let xh = cache.xhat.row(t);
        let sum = dxhat.sum();
        let sum_x = dxhat.iter().zip(xh.iter()).fold(T::zero(), |a, (&g, &h)| a + g * h);
        let inv = cache.inv_std[t] / d;
        for ((o, &g), &h) in dx.row_mut(t).iter_mut().zip(dxhat.iter()).zip(xh.iter()) {
            *o = inv * (d * g - sum - h * sum_x);
        }
    }
    dx
}

/// `c += a^T b`.
fn acc_at_b<T: Real>(grads: &mut Parameters<T>, id: usize, a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) {
    general_mat_mul(T::one(), &a.t(), b, T::one(), &mut grads.mat_mut(id));
}

fn acc_colsum<T: Real>(grads: &mut Parameters<T>, id: usize, m: &Array2<T>) {
    let mut g = grads.vec_mut(id);
    g += &m.sum_axis(Axis(0));
}

fn outer<T: Real>(a: &Array1<T>, b: &Array1<T>) -> Array2<T> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

fn forward_sample<T: Real>(p: &Parameters<T>, pe: &Array2<T>, x: &[T]) -> SampleCache<T> {
    let cfg = &p.config;
    let ids = p.ids();
    let l1 = cfg.conv1_len().expect("validated config");
    let l2 = cfg.seq_len().expect("validated config");
    let (c1, k1, s1) = (cfg.conv1.out_ch, cfg.conv1.kernel, cfg.conv1.stride);
    let (k2, s2) = (cfg.conv2.kernel, cfg.conv2.stride);
    let d = cfg.d_model;

    let patches1 = ArrayView2::from_shape((l1, k1).strides((s1, 1)), x).expect("conv1 patches");
    let mut h1_pre = patches1.dot(&p.mat(ids.conv1_w));
    add_bias(&mut h1_pre, p.vec(ids.conv1_b));
    let h1 = h1_pre.mapv(relu);

    let h1_flat = h1.as_slice().expect("row-major");
    let patches2 = ArrayView2::from_shape((l2, k2 * c1).strides((s2 * c1, 1)), h1_flat).expect("conv2 patches");
    let mut x_cur = patches2.dot(&p.mat(ids.conv2_w));
    add_bias(&mut x_cur, p.vec(ids.conv2_b));
    x_cur += &pe.slice(s![..l2, ..]);

    let dh = cfg.head_dim();
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for lid in &ids.layers {
        let (a, ln1) = layer_norm(&x_cur, p.vec(lid.ln1_gamma), p.vec(lid.ln1_beta));
        let mut q = a.dot(&p.mat(lid.wq));
        add_bias(&mut q, p.vec(lid.bq));
        let mut k = a.dot(&p.mat(lid.wk));
        add_bias(&mut k, p.vec(lid.bk));
        let mut v = a.dot(&p.mat(lid.wv));
        add_bias(&mut v, p.vec(lid.bv));

        let mut o = Array2::zeros((l2, d));
        let mut probs = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores.mapv_inplace(|v| v * scale);
            for row in scores.rows_mut() {
                softmax_in_place(row);
            }
            o.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let mut attn_out = o.dot(&p.mat(lid.wo));
        add_bias(&mut attn_out, p.vec(lid.bo));
        x_cur += &attn_out;

        let (b, ln2) = layer_norm(&x_cur, p.vec(lid.ln2_gamma), p.vec(lid.ln2_beta));
        let mut f_pre = b.dot(&p.mat(lid.ff_w1));
        add_bias(&mut f_pre, p.vec(lid.ff_b1));
        let mut ff = f_pre.mapv(relu).dot(&p.mat(lid.ff_w2));
        add_bias(&mut ff, p.vec(lid.ff_b2));
        x_cur += &ff;

        layers.push(LayerCache {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            o,
            ln2,
            b,
            f_pre,
        });
    }

    let (z, final_ln) = layer_norm(&x_cur, p.vec(ids.final_gamma), p.vec(ids.final_beta));

    let mut u_pre = z.dot(&p.mat(ids.pool_w1));
    add_bias(&mut u_pre, p.vec(ids.pool_b1));
    let pool_w2 = p.mat(ids.pool_w2);
    let pool_b2 = p.slice(ids.pool_b2)[0];
    let mut alpha = u_pre.mapv(relu).dot(&pool_w2.column(0));
    alpha.mapv_inplace(|v| v + pool_b2);
    softmax_in_place(alpha.view_mut());
    let pooled = z.t().dot(&alpha);

    let mut c1_pre = pooled.dot(&p.mat(ids.head_w1));
    c1_pre += &p.vec(ids.head_b1);
    let mut c2_pre = c1_pre.mapv(relu).dot(&p.mat(ids.head_w2));
    c2_pre += &p.vec(ids.head_b2);
    let mut logits = c2_pre.mapv(relu).dot(&p.mat(ids.head_w3));
    logits += &p.vec(ids.head_b3);

    SampleCache {
        h1_pre,
        h1,
        layers,
        final_ln,
        z,
        u_pre,
        alpha,
        pooled,
        c1_pre,
        c2_pre,
        logits,
    }
}

fn backward_sample<T: Real>(p: &Parameters<T>, c: &SampleCache<T>, x: &[T], dlogits: &Array1<T>, g: &mut Parameters<T>) {
    let cfg = &p.config;
    let ids = p.ids();
    let l1 = cfg.conv1_len().expect("validated config");
    let l2 = cfg.seq_len().expect("validated config");
    let (c1, k1, s1) = (cfg.conv1.out_ch, cfg.conv1.kernel, cfg.conv1.stride);
    let (k2, s2) = (cfg.conv2.kernel, cfg.conv2.stride);
    let d = cfg.d_model;

    // Classifier.
    let c2 = c.c2_pre.mapv(relu);
    g.mat_mut(ids.head_w3).scaled_add(T::one(), &outer(&c2, dlogits));
    g.vec_mut(ids.head_b3).scaled_add(T::one(), dlogits);
    let mut dc2 = p.mat(ids.head_w3).dot(dlogits);
    dc2.zip_mut_with(&c.c2_pre, |g, &v| if v <= T::zero() { *g = T::zero() });
    let c1v = c.c1_pre.mapv(relu);
    g.mat_mut(ids.head_w2).scaled_add(T::one(), &outer(&c1v, &dc2));
    g.vec_mut(ids.head_b2).scaled_add(T::one(), &dc2);
    let mut dc1 = p.mat(ids.head_w2).dot(&dc2);
    dc1.zip_mut_with(&c.c1_pre, |g, &v| if v <= T::zero() { *g = T::zero() });
    g.mat_mut(ids.head_w1).scaled_add(T::one(), &outer(&c.pooled, &dc1));
    g.vec_mut(ids.head_b1).scaled_add(T::one(), &dc1);
    let dpooled = p.mat(ids.head_w1).dot(&dc1);

    // Attention pooling.
    let mut dz = outer(&c.alpha, &dpooled);
    let dalpha = c.z.dot(&dpooled);
    let weighted = c.alpha.dot(&dalpha);
    let dscore: Array1<T> = c
        .alpha
        .iter()
        .zip(dalpha.iter())
        .map(|(&a, &da)| a * (da - weighted))
        .collect();
    g.slice_mut(ids.pool_b2)[0] = g.slice(ids.pool_b2)[0] + dscore.sum();
    let u = c.u_pre.mapv(relu);
    {
        let dw2 = u.t().dot(&dscore);
        let mut gw2 = g.mat_mut(ids.pool_w2);
        gw2.column_mut(0).scaled_add(T::one(), &dw2);
    }
    let pool_w2 = p.mat(ids.pool_w2);
    let mut du = outer(&dscore, &pool_w2.column(0).to_owned());
    relu_mask(&mut du, &c.u_pre);
    acc_at_b(g, ids.pool_w1, &c.z.view(), &du.view());
    acc_colsum(g, ids.pool_b1, &du);
    general_mat_mul(T::one(), &du, &p.mat(ids.pool_w1).t(), T::one(), &mut dz);

    let mut dx = layer_norm_back(&dz, &c.final_ln, p.vec(ids.final_gamma), g, ids.final_gamma, ids.final_beta);

    // Encoder layers, last to first.
    let dh = cfg.head_dim();
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    for (lid, lc) in ids.layers.iter().zip(&c.layers).rev() {
        // Feed-forward residual branch.
        let f_act = lc.f_pre.mapv(relu);
        acc_at_b(g, lid.ff_w2, &f_act.view(), &dx.view());
        acc_colsum(g, lid.ff_b2, &dx);
        let mut df = dx.dot(&p.mat(lid.ff_w2).t());
        relu_mask(&mut df, &lc.f_pre);
        acc_at_b(g, lid.ff_w1, &lc.b.view(), &df.view());
        acc_colsum(g, lid.ff_b1, &df);
        let db = df.dot(&p.mat(lid.ff_w1).t());
        dx += &layer_norm_back(&db, &lc.ln2, p.vec(lid.ln2_gamma), g, lid.ln2_gamma, lid.ln2_beta);

        // Attention residual branch.
        acc_at_b(g, lid.wo, &lc.o.view(), &dx.view());
        acc_colsum(g, lid.bo, &dx);
        let d_o = dx.dot(&p.mat(lid.wo).t());
        let mut dq = Array2::zeros((l2, d));
        let mut dk = Array2::zeros((l2, d));
        let mut dv = Array2::zeros((l2, d));
        for (h, probs) in lc.probs.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let doh = d_o.slice(cols);
            let mut dp = doh.dot(&lc.v.slice(cols).t());
            dv.slice_mut(cols).assign(&probs.t().dot(&doh));
            for (mut drow, prow) in dp.rows_mut().into_iter().zip(probs.rows()) {
                let dot = drow.iter().zip(prow.iter()).fold(T::zero(), |a, (&x, &y)| a + x * y);
                drow.zip_mut_with(&prow, |dv, &pv| *dv = pv * (*dv - dot) * scale);
            }
            dq.slice_mut(cols).assign(&dp.dot(&lc.k.slice(cols)));
            dk.slice_mut(cols).assign(&dp.t().dot(&lc.q.slice(cols)));
        }
        let a = lc.a.view();
        acc_at_b(g, lid.wq, &a, &dq.view());
        acc_colsum(g, lid.bq, &dq);
        acc_at_b(g, lid.wk, &a, &dk.view());
        acc_colsum(g, lid.bk, &dk);
        acc_at_b(g, lid.wv, &a, &dv.view());
        acc_colsum(g, lid.bv, &dv);
        let mut da = dq.dot(&p.mat(lid.wq).t());
        general_mat_mul(T::one(), &dk, &p.mat(lid.wk).t(), T::one(), &mut da);
        general_mat_mul(T::one(), &dv, &p.mat(lid.wv).t(), T::one(), &mut da);
        dx += &layer_norm_back(&da, &lc.ln1, p.vec(lid.ln1_gamma), g, lid.ln1_gamma, lid.ln1_beta);
    }

    // Convolutional front end. The positional encoding is constant.
    let h1_flat = c.h1.as_slice().expect("row-major");
    let patches2 = ArrayView2::from_shape((l2, k2 * c1).strides((s2 * c1, 1)), h1_flat).expect("conv2 patches");
    acc_at_b(g, ids.conv2_w, &patches2, &dx.view());
    acc_colsum(g, ids.conv2_b, &dx);
    let dpatch = dx.dot(&p.mat(ids.conv2_w).t());
    let mut dh1 = Array2::<T>::zeros((l1, c1));
    {
        let flat = dh1.as_slice_mut().expect("row-major");
        for (t, row) in dpatch.rows().into_iter().enumerate() {
            let start = s2 * t * c1;
            for (dst, &src) in flat[start..start + k2 * c1].iter_mut().zip(row.iter()) {
                *dst += src;
            }
        }
    }
    relu_mask(&mut dh1, &c.h1_pre);
    let patches1 = ArrayView2::from_shape((l1, k1).strides((s1, 1)), x).expect("conv1 patches");
    acc_at_b(g, ids.conv1_w, &patches1, &dh1.view());
    acc_colsum(g, ids.conv1_b, &dh1);
}

/// Output shapes of each stage for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageShapes {
    /// Convolutional front end as (channels, length).
    pub conv: (usize, usize),
    /// Encoder output as (length, d_model).
    pub encoder: (usize, usize),
    pub pooled: usize,
    pub logits: usize,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `(batch, n_class)`.
    pub logits: Array2<T>,
    /// Attention-pool weights per sample.
    pub pool_weights: Vec<Array1<T>>,
    pub shapes: StageShapes,
}

fn check_inputs<T>(cfg: &ModelConfig, inputs: &[&[T]]) -> Result<()> {
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != cfg.n_input {
            return Err(Error::Shape(format!(
                "sample {i} has length {}, model expects {}",
                x.len(),
                cfg.n_input
            )));
        }
    }
    Ok(())
}

pub fn forward<T: Real>(p: &Parameters<T>, inputs: &[&[T]], exec: ExecMode) -> Result<ForwardOutput<T>> {
    let cfg = &p.config;
    check_inputs(cfg, inputs)?;
    let l2 = cfg.seq_len().expect("validated config");
    let pe = positional_encoding::<T>(l2, cfg.d_model);
    let caches = par::map(exec, inputs, |x| {
        let c = forward_sample(p, &pe, x);
        (c.logits, c.alpha)
    });
    let mut logits = Array2::zeros((inputs.len(), cfg.n_class));
    let mut pool_weights = Vec::with_capacity(inputs.len());
    for (i, (l, a)) in caches.into_iter().enumerate() {
        logits.row_mut(i).assign(&l);
        pool_weights.push(a);
    }
    Ok(ForwardOutput {
        logits,
        pool_weights,
        shapes: StageShapes {
            conv: (cfg.d_model, l2),
            encoder: (l2, cfg.d_model),
            pooled: cfg.d_model,
            logits: cfg.n_class,
        },
    })
}

/// Result of one loss/gradient evaluation over a batch.
#[derive(Debug, Clone)]
pub struct BatchGrad<T> {
    /// Mean cross-entropy.
    pub loss: f64,
    pub grads: Parameters<T>,
    pub sample_losses: Vec<f64>,
    pub predictions: Vec<usize>,
}

/// Mean cross-entropy and its gradient with respect to every parameter.
pub fn loss_and_grad<T: Real>(
    p: &Parameters<T>,
    inputs: &[&[T]],
    labels: &[usize],
    exec: ExecMode,
) -> Result<BatchGrad<T>> {
    let cfg = &p.config;
    if inputs.len() != labels.len() {
        return Err(Error::InvalidInput(format!("{} inputs but {} labels", inputs.len(), labels.len())));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    check_inputs(cfg, inputs)?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= cfg.n_class) {
        return Err(Error::InvalidLabel {
            index: bad,
            n_class: cfg.n_class,
        });
    }
    let l2 = cfg.seq_len().expect("validated config");
    let pe = positional_encoding::<T>(l2, cfg.d_model);
    let inv_batch = T::from_f64(1.0 / inputs.len() as f64);
    let n_chunks = inputs.len().div_ceil(GRAD_CHUNK);

    let partials = par::map_range(exec, n_chunks, |ci| {
        let lo = ci * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(inputs.len());
        let mut grads = p.zeros_like();
        let mut out = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            let cache = forward_sample(p, &pe, inputs[i]);
            let logits: Vec<f64> = cache.logits.iter().map(|v| v.as_f64()).collect();
            let probs = softmax(&logits);
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let loss = lse - logits[labels[i]];
            let mut dlogits: Array1<T> = probs.iter().map(|&q| T::from_f64(q)).collect();
            dlogits[labels[i]] -= T::one();
            dlogits.mapv_inplace(|v| v * inv_batch);
            backward_sample(p, &cache, inputs[i], &dlogits, &mut grads);
            out.push((loss, argmax(&logits)));
        }
        (grads, out)
    });

    let mut iter = partials.into_iter();
    let (mut grads, first) = iter.next().expect("non-empty batch");
    let mut per_sample = first;
    for (g, s) in iter {
        grads.add_assign(&g);
        per_sample.extend(s);
    }
    let sample_losses: Vec<f64> = per_sample.iter().map(|s| s.0).collect();
    Ok(BatchGrad {
        loss: sample_losses.iter().sum::<f64>() / inputs.len() as f64,
        predictions: per_sample.iter().map(|s| s.1).collect(),
        sample_losses,
        grads,
    })
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Zone decision from raw logits: argmax with its softmax probability.
pub fn decide(logits: &[f64], n_rows: usize, n_cols: usize) -> Result<(GridLabel, f64)> {
    let probs = softmax(logits);
    let best = argmax(&probs);
    Ok((GridLabel::from_index(best, n_rows, n_cols)?, probs[best]))
}

/// Most likely zone for one vector and its probability.
pub fn predict<T: Real>(p: &Parameters<T>, x: &[T], n_rows: usize, n_cols: usize) -> Result<(GridLabel, f64)> {
    if n_rows * n_cols != p.config.n_class {
        return Err(Error::Compatibility(format!(
            "{n_rows}x{n_cols} grid does not match a {}-class model",
            p.config.n_class
        )));
    }
    let out = forward(p, &[x], ExecMode::Sequential)?;
    let logits: Vec<f64> = out.logits.row(0).iter().map(|v| v.as_f64()).collect();
    decide(&logits, n_rows, n_cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 * 0.7 + seed as f64).sin() * 1.3).tanh()).collect()
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let cfg = ModelConfig::tiny(5);
        let p = Parameters::<f64>::init(&cfg, 1).unwrap();
        let xs: Vec<Vec<f64>> = (0..4).map(|s| sample(40, s)).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let out = forward(&p, &refs, ExecMode::Sequential).unwrap();
        for row in out.logits.rows() {
            let probs = softmax(&row.to_vec());
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for w in &out.pool_weights {
            assert!((w.sum() - 1.0).abs() < 1e-12);
        }
        assert_eq!(out.shapes.conv, (8, 7));
    }

    #[test]
    fn wrong_length_is_a_shape_error() {
        let cfg = ModelConfig::tiny(5);
        let p = Parameters::<f64>::init(&cfg, 1).unwrap();
        let x = vec![0.0; 39];
        assert!(matches!(forward(&p, &[&x], ExecMode::Sequential), Err(Error::Shape(_))));
    }

    #[test]
    fn bad_label_rejected() {
        let cfg = ModelConfig::tiny(5);
        let p = Parameters::<f64>::init(&cfg, 1).unwrap();
        let x = sample(40, 0);
        assert!(matches!(
            loss_and_grad(&p, &[&x], &[5], ExecMode::Sequential),
            Err(Error::InvalidLabel { index: 5, .. })
        ));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.0, 3.0, 3.0, 1.0]), 1);
        let mut logits = vec![0.0; 480];
        logits[17] = 2.0;
        let (label, conf) = decide(&logits, 32, 15).unwrap();
        assert_eq!((label.row, label.col), (1, 2));
        assert!(conf > 1.0 / 480.0);
    }

    #[test]
    fn positional_encoding_breaks_permutation_symmetry() {
        let cfg = ModelConfig::tiny(5);
        let p = Parameters::<f64>::init(&cfg, 3).unwrap();
        let x = sample(40, 2);
        let mut y = x.clone();
        y.reverse();
        let out = forward(&p, &[&x, &y], ExecMode::Sequential).unwrap();
        assert_ne!(out.logits.row(0), out.logits.row(1));
    }
}
