//! A small dense tensor engine: forward kernels with matching backward
//! passes, a tape for reverse-mode differentiation, finite-difference
//! gradient checking and SGD with momentum.
//!
//! Feature maps are laid out height × width × channels, row-major.
//! Convolution weights are `[z, z, in, out]`, fully connected weights `[n, m]`.

mod gradcheck;
mod graph;
mod ops;
mod sgd;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, GroupError, Objective, Probe};
pub use graph::{Graph, Var};
pub use ops::{
    avg_pool_2x2, avg_pool_2x2_backward, concat_channels, conv2d, conv2d_backward, elementwise,
    elementwise_backward, fully_connected, fully_connected_backward, global_avg_pool,
    global_avg_pool_backward, relu, relu_backward, softmax_cross_entropy, ConvGrads, ElementwiseOp,
    FcGrads,
};
pub use sgd::Sgd;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid convolution spec: {0}")]
    InvalidSpec(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("expected rank {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major array with an optional gradient buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
            grad: None,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "gradient of length {} for tensor {:?}",
                grad.len(),
                self.shape
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn take_grad(&mut self) -> Option<Vec<f64>> {
        self.grad.take()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// `(height, width, channels)` of a rank-3 tensor.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(TensorError::Rank {
                expected: 3,
                shape: self.shape.clone(),
            }),
        }
    }

    /// Same data viewed with another shape of equal size.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Elementwise `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &Tensor, b: f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect(),
            grad: None,
        })
    }

    /// Index of the largest element; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Extracts channels `start..start + count` of a rank-3 tensor.
    pub fn channel_slice(&self, start: usize, count: usize) -> Result<Self> {
        let (h, w, c) = self.hwc()?;
        if start + count > c {
            return Err(TensorError::ShapeMismatch(format!(
                "channels {start}..{} of {c}",
                start + count
            )));
        }
        let mut data = Vec::with_capacity(h * w * count);
        for px in self.data.chunks_exact(c) {
            data.extend_from_slice(&px[start..start + count]);
        }
        Tensor::new(&[h, w, count], data)
    }
}

/// `C^{z×z,d}_s`: square kernel `z`, `out_channels = d`, stride `s`, "same-ceil"
/// padding so the output side is `ceil(in / s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(kernel: usize, in_channels: usize, out_channels: usize, stride: usize) -> Result<Self> {
        let spec = Self {
            kernel,
            in_channels,
            out_channels,
            stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 3, 5, 7].contains(&self.kernel) {
            return Err(TensorError::InvalidSpec(format!("kernel {} not in {{1,3,5,7}}", self.kernel)));
        }
        if ![1, 2, 4].contains(&self.stride) {
            return Err(TensorError::InvalidSpec(format!("stride {} not in {{1,2,4}}", self.stride)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(TensorError::InvalidSpec("channel counts must be positive".into()));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.kernel, self.kernel, self.in_channels, self.out_channels]
    }

    /// Number of weights plus biases.
    pub fn param_count(&self) -> usize {
        self.kernel * self.kernel * self.in_channels * self.out_channels + self.out_channels
    }

    pub fn out_dim(&self, input: usize) -> usize {
        out_dim(input, self.stride)
    }

    /// Padding placed before the first row/column for an input side of `input`.
    pub fn pad_before(&self, input: usize) -> usize {
        same_ceil_padding(input, self.kernel, self.stride).0
    }
}

/// `ceil(input / stride)`.
pub fn out_dim(input: usize, stride: usize) -> usize {
    input.div_ceil(stride)
}

/// `(before, total)` padding of the same-ceil rule along one axis.
pub fn same_ceil_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = out_dim(input, stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (total / 2, total)
}
