//! Flat parameter storage.
//!
//! All tensors live in one contiguous buffer in a fixed order, so optimizer
//! steps, gradient reductions and checkpoints are plain slice operations.

use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::Real;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
    /// Fan-in for initialization; `None` for biases and norm parameters.
    init: Init,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    FanIn(usize),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerIds {
    pub ln1_gamma: usize,
    pub ln1_beta: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_gamma: usize,
    pub ln2_beta: usize,
    pub ff_w1: usize,
    pub ff_b1: usize,
    pub ff_w2: usize,
    pub ff_b2: usize,
}

/// Tensor indices into a [`Layout`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ids {
    pub conv1_w: usize,
    pub conv1_b: usize,
    pub conv2_w: usize,
    pub conv2_b: usize,
    pub layers: Vec<LayerIds>,
    pub final_gamma: usize,
    pub final_beta: usize,
    pub pool_w1: usize,
    pub pool_b1: usize,
    pub pool_w2: usize,
    pub pool_b2: usize,
    pub head_w1: usize,
    pub head_b1: usize,
    pub head_w2: usize,
    pub head_b2: usize,
    pub head_w3: usize,
    pub head_b3: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub ids: Ids,
    pub total: usize,
}

struct Builder {
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let len = shape.iter().product();
        self.tensors.push(TensorSpec {
            name,
            shape: shape.to_vec(),
            offset: self.total,
            len,
            init,
        });
        self.total += len;
        self.tensors.len() - 1
    }

    fn linear(&mut self, prefix: &str, w: &str, b: &str, fan_in: usize, out: usize) -> (usize, usize) {
        let wi = self.push(format!("{prefix}.{w}"), &[fan_in, out], Init::FanIn(fan_in));
        let bi = self.push(format!("{prefix}.{b}"), &[out], Init::Zeros);
        (wi, bi)
    }

    fn norm(&mut self, prefix: &str, d: usize) -> (usize, usize) {
        let g = self.push(format!("{prefix}.gamma"), &[d], Init::Ones);
        let b = self.push(format!("{prefix}.beta"), &[d], Init::Zeros);
        (g, b)
    }
}

impl Layout {
    /// Conv weights are stored as `(kernel * in_ch, out_ch)` with the kernel
    /// tap as the slow index; linear weights as `(fan_in, fan_out)`.
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut b = Builder {
            tensors: Vec::new(),
            total: 0,
        };
        let d = cfg.d_model;
        let k1 = cfg.conv1.kernel * cfg.conv1.in_ch;
        let (conv1_w, conv1_b) = b.linear("conv1", "weight", "bias", k1, cfg.conv1.out_ch);
        let k2 = cfg.conv2.kernel * cfg.conv2.in_ch;
        let (conv2_w, conv2_b) = b.linear("conv2", "weight", "bias", k2, d);
        let layers = (0..cfg.n_layers)
            .map(|i| {
                let p = format!("encoder.{i}");
                let (ln1_gamma, ln1_beta) = b.norm(&format!("{p}.ln1"), d);
                let a = format!("{p}.attn");
                let (wq, bq) = b.linear(&a, "wq", "bq", d, d);
                let (wk, bk) = b.linear(&a, "wk", "bk", d, d);
                let (wv, bv) = b.linear(&a, "wv", "bv", d, d);
                let (wo, bo) = b.linear(&a, "wo", "bo", d, d);
                let (ln2_gamma, ln2_beta) = b.norm(&format!("{p}.ln2"), d);
                let f = format!("{p}.ff");
                let (ff_w1, ff_b1) = b.linear(&f, "w1", "b1", d, cfg.d_ff);
                let (ff_w2, ff_b2) = b.linear(&f, "w2", "b2", cfg.d_ff, d);
                LayerIds {
                    ln1_gamma,
                    ln1_beta,
                    wq,
                    bq,
                    wk,
                    bk,
                    wv,
                    bv,
                    wo,
                    bo,
                    ln2_gamma,
                    ln2_beta,
                    ff_w1,
                    ff_b1,
                    ff_w2,
                    ff_b2,
                }
            })
            .collect();
        let (final_gamma, final_beta) = b.norm("encoder.final_ln", d);
        let (pool_w1, pool_b1) = b.linear("pool", "w1", "b1", d, cfg.pool_hidden);
        let (pool_w2, pool_b2) = b.linear("pool", "w2", "b2", cfg.pool_hidden, 1);
        let [m1, m2] = cfg.mlp_hidden;
        let (head_w1, head_b1) = b.linear("head", "w1", "b1", d, m1);
        let (head_w2, head_b2) = b.linear("head", "w2", "b2", m1, m2);
        let (head_w3, head_b3) = b.linear("head", "w3", "b3", m2, cfg.n_class);
        Self {
            tensors: b.tensors,
            total: b.total,
            ids: Ids {
                conv1_w,
                conv1_b,
                conv2_w,
                conv2_b,
                layers,
                final_gamma,
                final_beta,
                pool_w1,
                pool_b1,
                pool_w2,
                pool_b2,
                head_w1,
                head_b1,
                head_w2,
                head_b2,
                head_w3,
                head_b3,
            },
        }
    }
}

/// Model weights (or a gradient with the same layout).
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub config: ModelConfig,
    pub layout: Arc<Layout>,
    pub data: Vec<T>,
}

impl<T: Real> Parameters<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Arc::new(Layout::new(config));
        Ok(Self::zeros_like_layout(config.clone(), layout))
    }

    fn zeros_like_layout(config: ModelConfig, layout: Arc<Layout>) -> Self {
        Self {
            data: vec![T::zero(); layout.total],
            config,
            layout,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros_like_layout(self.config.clone(), self.layout.clone())
    }

    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// zero biases, unit norm gains. Deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = p.layout.clone();
        for t in &layout.tensors {
            let dst = &mut p.data[t.offset..t.offset + t.len];
            match t.init {
                Init::Zeros => {}
                Init::Ones => dst.fill(T::one()),
                Init::FanIn(fan) => {
                    let bound = 1.0 / (fan as f64).sqrt();
                    for v in dst.iter_mut() {
                        *v = T::from_f64(rng.gen_range(-bound..bound));
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ids(&self) -> &Ids {
        &self.layout.ids
    }

    pub fn slice(&self, id: usize) -> &[T] {
        let t = &self.layout.tensors[id];
        &self.data[t.offset..t.offset + t.len]
    }

    pub fn slice_mut(&mut self, id: usize) -> &mut [T] {
        let t = &self.layout.tensors[id];
        &mut self.data[t.offset..t.offset + t.len]
    }

    pub fn vec(&self, id: usize) -> ArrayView1<'_, T> {
        ArrayView1::from(self.slice(id))
    }

    pub fn vec_mut(&mut self, id: usize) -> ArrayViewMut1<'_, T> {
        ArrayViewMut1::from(self.slice_mut(id))
    }

    pub fn mat(&self, id: usize) -> ArrayView2<'_, T> {
        let shape = &self.layout.tensors[id].shape;
        ArrayView2::from_shape((shape[0], shape[1]), self.slice(id)).expect("matrix tensor")
    }

    pub fn mat_mut(&mut self, id: usize) -> ArrayViewMut2<'_, T> {
        let shape = self.layout.tensors[id].shape.clone();
        ArrayViewMut2::from_shape((shape[0], shape[1]), self.slice_mut(id)).expect("matrix tensor")
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn tensor_index(&self, name: &str) -> Option<usize> {
        self.layout.tensors.iter().position(|t| t.name == name)
    }
}
