use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Output length of an unpadded strided convolution, if any.
pub fn conv_out_len(n: usize, kernel: usize, stride: usize) -> Option<usize> {
    (n >= kernel && stride > 0).then(|| (n - kernel) / stride + 1)
}

/// Architecture of the zone classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_input: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub pool_hidden: usize,
    pub mlp_hidden: [usize; 2],
    pub n_class: usize,
}

impl ModelConfig {
    /// Full-size network: 1791-sample input, 445 encoder steps of width 256.
    pub fn full(n_class: usize) -> Self {
        Self {
            n_input: 1791,
            conv1: ConvSpec {
                in_ch: 1,
                out_ch: 64,
                kernel: 7,
                stride: 2,
            },
            conv2: ConvSpec {
                in_ch: 64,
                out_ch: 256,
                kernel: 5,
                stride: 2,
            },
            d_model: 256,
            d_ff: 1024,
            max_len: 5000,
            n_layers: 4,
            n_heads: 8,
            pool_hidden: 128,
            mlp_hidden: [512, 256],
            n_class,
        }
    }

    /// Laptop-sized network with the same layer structure.
    pub fn desk(n_class: usize) -> Self {
        Self {
            n_input: 448,
            conv2: ConvSpec {
                in_ch: 64,
                out_ch: 64,
                kernel: 5,
                stride: 2,
            },
            d_model: 64,
            d_ff: 256,
            n_layers: 2,
            n_heads: 4,
            ..Self::full(n_class)
        }
    }

    /// A very small network for gradient checks and fast tests.
    pub fn tiny(n_class: usize) -> Self {
        Self {
            n_input: 40,
            conv1: ConvSpec {
                in_ch: 1,
                out_ch: 4,
                kernel: 7,
                stride: 2,
            },
            conv2: ConvSpec {
                in_ch: 4,
                out_ch: 8,
                kernel: 5,
                stride: 2,
            },
            d_model: 8,
            d_ff: 12,
            max_len: 64,
            n_layers: 2,
            n_heads: 2,
            pool_hidden: 6,
            mlp_hidden: [10, 7],
            n_class,
        }
    }

    pub fn conv1_len(&self) -> Option<usize> {
        conv_out_len(self.n_input, self.conv1.kernel, self.conv1.stride)
    }

    /// Encoder sequence length.
    pub fn seq_len(&self) -> Option<usize> {
        conv_out_len(self.conv1_len()?, self.conv2.kernel, self.conv2.stride)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.conv1.in_ch != 1 {
            return bad("conv1 must take a single input channel".into());
        }
        if self.conv2.in_ch != self.conv1.out_ch || self.conv2.out_ch != self.d_model {
            return bad("conv channel widths must chain 1 -> conv1.out -> d_model".into());
        }
        let sizes = [
            self.d_model,
            self.d_ff,
            self.pool_hidden,
            self.mlp_hidden[0],
            self.mlp_hidden[1],
            self.n_class,
            self.conv1.out_ch,
        ];
        if sizes.contains(&0) || self.conv1.stride == 0 || self.conv2.stride == 0 {
            return bad("layer widths and strides must be positive".into());
        }
        match self.seq_len() {
            None => bad(format!("input length {} too short for the conv front end", self.n_input)),
            Some(l) if l > self.max_len => bad(format!("sequence length {l} exceeds max_len {}", self.max_len)),
            Some(_) => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// A zone of the screen grid, numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridLabel {
    pub row: usize,
    pub col: usize,
    pub index: usize,
}

impl GridLabel {
    pub fn new(row: usize, col: usize, n_rows: usize, n_cols: usize) -> Result<Self> {
        if row >= n_rows || col >= n_cols {
            return Err(Error::InvalidLabel {
                index: row * n_cols + col,
                n_class: n_rows * n_cols,
            });
        }
        Ok(Self {
            row,
            col,
            index: row * n_cols + col,
        })
    }

    pub fn from_index(index: usize, n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_cols == 0 || index >= n_rows * n_cols {
            return Err(Error::InvalidLabel {
                index,
                n_class: n_rows * n_cols,
            });
        }
        Ok(Self {
            row: index / n_cols,
            col: index % n_cols,
            index,
        })
    }
}
