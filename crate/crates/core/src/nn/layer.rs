//! Layer trait and shared machinery.
//!
//! Layers cache whatever the forward pass needs for its backward pass.
//! `backward` consumes that cache, so calling it twice (or before any
//! forward) is rejected. Parameter gradients are *accumulated* into each
//! tensor's grad buffer, which is what mini-batch training wants.

use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    Conv3d,
    Dense,
    Lstm,
    Dropout,
    Relu,
    SoftmaxXent,
    Flatten,
    MaxPool,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Conv3d => "conv3d",
            LayerKind::Dense => "dense",
            LayerKind::Lstm => "lstm",
            LayerKind::Dropout => "dropout",
            LayerKind::Relu => "relu",
            LayerKind::SoftmaxXent => "softmax_xent",
            LayerKind::Flatten => "flatten",
            LayerKind::MaxPool => "maxpool",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        Some(match s {
            "conv2d" => LayerKind::Conv2d,
            "conv3d" => LayerKind::Conv3d,
            "dense" => LayerKind::Dense,
            "lstm" => LayerKind::Lstm,
            "dropout" => LayerKind::Dropout,
            "relu" => LayerKind::Relu,
            "softmax_xent" => LayerKind::SoftmaxXent,
            "flatten" => LayerKind::Flatten,
            "maxpool" => LayerKind::MaxPool,
            _ => return None,
        })
    }
}

pub trait Layer: Send {
    fn kind(&self) -> LayerKind;

    /// Output shape for a given input shape, validating extents.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>>;

    /// `seed` feeds stochastic layers (dropout masks); deterministic layers
    /// ignore it. In `Mode::Infer` every layer is deterministic.
    fn forward(&mut self, input: &Tensor, mode: Mode, seed: u64) -> Result<Tensor>;

    /// Propagates `grad_out` to the input, accumulating parameter gradients.
    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor>;

    fn params(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }

    fn param_names(&self) -> Vec<&'static str> {
        Vec::new()
    }
}

/// Fan-in scaled uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
pub(crate) fn uniform_fan_in(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    (0..n).map(|_| dist.sample(rng)).collect()
}

pub(crate) fn expect_shape(context: &str, expected: &[usize], got: &[usize]) -> Result<()> {
    if expected != got {
        return Err(crate::Error::ShapeMismatch {
            context: context.to_string(),
            expected: expected.to_vec(),
            got: got.to_vec(),
        });
    }
    Ok(())
}
