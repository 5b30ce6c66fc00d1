//! Zone classifier: strided 1-D convolutions, a transformer encoder,
//! attention pooling and an MLP head, with hand-written backpropagation.

pub mod checkpoint;
pub mod config;
pub mod model;
pub mod params;
pub mod train;

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, NumAssign};

pub use checkpoint::{load_model, save_model};
pub use config::{conv_out_len, ConvSpec, GridLabel, ModelConfig};
pub use model::{forward, loss_and_grad, predict, softmax, BatchGrad, ForwardOutput, StageShapes};
pub use params::Parameters;
pub use train::{evaluate, train, Dataset, EpochStats, Evaluation, TrainConfig};

/// Floating-point element type of the network. Training runs in `f32`;
/// gradient checks use `f64`.
pub trait Real: LinalgScalar + Float + NumAssign + ScalarOperand + Send + Sync + Debug + Display + Default {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}
