use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{argmax, forward, loss_and_grad};
use super::params::Parameters;
use super::Real;
use crate::error::{Error, Result};
use crate::par::ExecMode;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 64,
            epochs: 12,
            seed: 0,
            exec: ExecMode::default(),
        }
    }
}

/// Labelled model inputs stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub n_input: usize,
    pub inputs: Vec<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> Dataset<T> {
    pub fn new(n_input: usize) -> Self {
        Self {
            n_input,
            inputs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, values: &[f64], label: usize) -> Result<()> {
        if values.len() != self.n_input {
            return Err(Error::Shape(format!("vector of length {} in a {}-input dataset", values.len(), self.n_input)));
        }
        self.inputs.extend(values.iter().map(|&v| T::from_f64(v)));
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.inputs[i * self.n_input..(i + 1) * self.n_input]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Real> Adam<T> {
    fn new(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [T], grads: &[T], cfg: &TrainConfig) {
        self.step += 1;
        let b1 = T::from_f64(cfg.beta1);
        let b2 = T::from_f64(cfg.beta2);
        let one = T::one();
        let c1 = T::from_f64(1.0 - cfg.beta1.powi(self.step));
        let c2 = T::from_f64(1.0 - cfg.beta2.powi(self.step));
        let lr = T::from_f64(cfg.learning_rate);
        let eps = T::from_f64(cfg.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Mini-batch Adam on mean cross-entropy. Batch order comes from `cfg.seed`;
/// gradients are reduced in a fixed order, so a given seed always produces
/// the same parameters and history.
pub fn train<T: Real>(
    params: Parameters<T>,
    train_set: &Dataset<T>,
    test_set: Option<&Dataset<T>>,
    cfg: &TrainConfig,
) -> Result<(Parameters<T>, Vec<EpochStats>)> {
    train_with_progress(params, train_set, test_set, cfg, |_| {})
}

pub fn train_with_progress<T: Real>(
    mut params: Parameters<T>,
    train_set: &Dataset<T>,
    test_set: Option<&Dataset<T>>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Parameters<T>, Vec<EpochStats>)> {
    if train_set.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be > 0".into()));
    }
    if train_set.n_input != params.config.n_input {
        return Err(Error::Shape(format!(
            "dataset vectors have length {}, model expects {}",
            train_set.n_input, params.config.n_input
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut losses = vec![0.0; train_set.len()];
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<&[T]> = batch.iter().map(|&i| train_set.row(i)).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let bg = loss_and_grad(&params, &inputs, &labels, cfg.exec)?;
            for ((&i, &l), (&pred, &y)) in batch.iter().zip(&bg.sample_losses).zip(bg.predictions.iter().zip(&labels)) {
                losses[i] = l;
                correct += usize::from(pred == y);
            }
            adam.update(&mut params.data, &bg.grads.data, cfg);
        }
        let test_acc = match test_set {
            Some(t) if !t.is_empty() => Some(evaluate(&params, t, cfg.exec)?.accuracy),
            _ => None,
        };
        let stats = EpochStats {
            epoch: epoch + 1,
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            test_acc,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    if !params.all_finite() {
        return Err(Error::InvalidInput("training diverged to non-finite parameters".into()));
    }
    Ok((params, history))
}

/// Accuracy plus a confusion matrix with true classes as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    pub fn from_predictions(predictions: Vec<usize>, labels: &[usize], n_class: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("cannot evaluate an empty set".into()));
        }
        if predictions.len() != labels.len() {
            return Err(Error::InvalidInput("prediction and label counts differ".into()));
        }
        let mut confusion = vec![vec![0u64; n_class]; n_class];
        for (&p, &y) in predictions.iter().zip(labels) {
            if p >= n_class || y >= n_class {
                return Err(Error::InvalidLabel {
                    index: p.max(y),
                    n_class,
                });
            }
            confusion[y][p] += 1;
        }
        let hits: u64 = (0..n_class).map(|i| confusion[i][i]).sum();
        Ok(Self {
            accuracy: hits as f64 / labels.len() as f64,
            confusion,
            predictions,
        })
    }
}

const EVAL_BATCH: usize = 256;

pub fn evaluate<T: Real>(params: &Parameters<T>, data: &Dataset<T>, exec: ExecMode) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate an empty set".into()));
    }
    let mut predictions = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let inputs: Vec<&[T]> = chunk.iter().map(|&i| data.row(i)).collect();
        let out = forward(params, &inputs, exec)?;
        for row in out.logits.rows() {
            let l: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
            predictions.push(argmax(&l));
        }
    }
    Evaluation::from_predictions(predictions, &data.labels, params.config.n_class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posnet::config::ModelConfig;

    #[test]
    fn perfect_and_all_wrong() {
        let labels = vec![0, 1, 2, 2, 1];
        let e = Evaluation::from_predictions(labels.clone(), &labels, 3).unwrap();
        assert_eq!(e.accuracy, 1.0);
        assert_eq!(e.confusion[2][2], 2);
        let wrong: Vec<usize> = labels.iter().map(|l| (l + 1) % 3).collect();
        let e = Evaluation::from_predictions(wrong, &labels, 3).unwrap();
        assert_eq!(e.accuracy, 0.0);
        for (c, row) in e.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>() as usize, labels.iter().filter(|&&l| l == c).count());
        }
        assert!(Evaluation::from_predictions(vec![], &[], 3).is_err());
    }

    #[test]
    fn empty_training_set_rejected() {
        let cfg = ModelConfig::tiny(2);
        let p = Parameters::<f32>::init(&cfg, 0).unwrap();
        let data = Dataset::<f32>::new(40);
        assert!(matches!(train(p, &data, None, &TrainConfig::default()), Err(Error::InvalidInput(_))));
    }
}
