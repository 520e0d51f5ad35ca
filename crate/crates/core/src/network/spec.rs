use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Shape of one input sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub const MNIST: InputShape = InputShape {
        channels: 1,
        height: 28,
        width: 28,
    };

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense {
        fan_in: usize,
        fan_out: usize,
    },
    Conv {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
}

impl LayerKind {
    pub fn is_weighted(&self) -> bool {
        !matches!(self, LayerKind::MaxPool { .. })
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, LayerKind::Dense { .. })
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerKind::Conv { .. })
    }

    /// Shape of the weight tensor, `[fan_in, fan_out]` or `[F, C, k, k]`.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerKind::Dense { fan_in, fan_out } => Some(vec![fan_in, fan_out]),
            LayerKind::Conv {
                in_channels,
                filters,
                kernel,
                ..
            } => Some(vec![filters, in_channels, kernel, kernel]),
            LayerKind::MaxPool { .. } => None,
        }
    }

    pub fn units(&self) -> usize {
        match *self {
            LayerKind::Dense { fan_out, .. } => fan_out,
            LayerKind::Conv { filters, .. } => filters,
            LayerKind::MaxPool { .. } => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub relu: bool,
    /// Dropout applied to this layer's output during training; 0 disables.
    pub dropout: f32,
}

impl LayerSpec {
    pub fn dense(name: &str, fan_in: usize, fan_out: usize) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Dense { fan_in, fan_out },
            relu: true,
            dropout: 0.0,
        }
    }

    pub fn conv(name: &str, in_channels: usize, filters: usize, kernel: usize) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Conv {
                in_channels,
                filters,
                kernel,
                stride: 1,
            },
            relu: true,
            dropout: 0.0,
        }
    }

    pub fn max_pool(name: &str, size: usize) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::MaxPool { size, stride: size },
            relu: false,
            dropout: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f32) -> Self {
        self.dropout = rate;
        self
    }

    pub fn linear(mut self) -> Self {
        self.relu = false;
        self
    }
}

/// Built-in architectures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// 784-300-100-10 MLP, ReLU, dropout after both hidden layers.
    Lenet300100,
    /// conv 20@5×5, pool, conv 50@5×5, pool, fc 500, fc 10.
    Lenet5,
}

impl Architecture {
    pub const DEFAULT_DROPOUT: f32 = 0.5;

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.specs_with_dropout(Self::DEFAULT_DROPOUT)
    }

    pub fn specs_with_dropout(&self, dropout: f32) -> Vec<LayerSpec> {
        match self {
            Architecture::Lenet300100 => vec![
                LayerSpec::dense("fc1", 784, 300).with_dropout(dropout),
                LayerSpec::dense("fc2", 300, 100).with_dropout(dropout),
                LayerSpec::dense("fc3", 100, 10).linear(),
            ],
            Architecture::Lenet5 => vec![
                LayerSpec::conv("conv1", 1, 20, 5),
                LayerSpec::max_pool("pool1", 2),
                LayerSpec::conv("conv2", 20, 50, 5),
                LayerSpec::max_pool("pool2", 2),
                LayerSpec::dense("fc1", 800, 500).with_dropout(dropout),
                LayerSpec::dense("fc2", 500, 10).linear(),
            ],
        }
    }

    pub fn input(&self) -> InputShape {
        InputShape::MNIST
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Lenet300100 => "lenet-300-100",
            Architecture::Lenet5 => "lenet-5",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lenet-300-100" | "lenet300100" => Ok(Architecture::Lenet300100),
            "lenet-5" | "lenet5" => Ok(Architecture::Lenet5),
            other => Err(Error::invalid(format!("unknown architecture `{other}`"))),
        }
    }
}
