//! Inverted dropout: survivors are scaled by 1/(1-rate) at training time so
//! inference is the identity.

use rand::Rng;

use super::layer::{expect_shape, Layer, LayerKind, Mode};
use super::tensor::Tensor;
use crate::seed;
use crate::{Error, Result};

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Per-element scale mask: 0 with probability `rate`, else 1/(1-rate).
pub(crate) fn scale_mask(n: usize, rate: f64, seed_value: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed_value, &[seed::stream::DROPOUT]);
    let keep_scale = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                keep_scale
            }
        })
        .collect()
}

/// Standalone inverted-dropout transform.
pub fn dropout_forward(input: &Tensor, rate: f64, training: bool, rng_seed: u64) -> Result<Tensor> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(input.detached());
    }
    let mask = scale_mask(input.len(), rate, rng_seed);
    let out: Vec<f64> = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Tensor::from_vec(input.shape(), out)
}

pub struct Dropout {
    rate: f64,
    cache: Option<DropCache>,
}

struct DropCache {
    shape: Vec<usize>,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Dropout { rate, cache: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Layer for Dropout {
    fn kind(&self) -> LayerKind {
        LayerKind::Dropout
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, input: &Tensor, mode: Mode, seed_value: u64) -> Result<Tensor> {
        if mode == Mode::Infer || self.rate == 0.0 {
            self.cache = Some(DropCache {
                shape: input.shape().to_vec(),
                mask: None,
            });
            return Ok(input.detached());
        }
        let mask = scale_mask(input.len(), self.rate, seed_value);
        let out: Vec<f64> = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.cache = Some(DropCache {
            shape: input.shape().to_vec(),
            mask: Some(mask),
        });
        Tensor::from_vec(input.shape(), out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        expect_shape("dropout backward", &cache.shape, grad_out.shape())?;
        let gx: Vec<f64> = match &cache.mask {
            None => grad_out.data().to_vec(),
            Some(mask) => grad_out.data().iter().zip(mask).map(|(g, m)| g * m).collect(),
        };
        Tensor::from_vec(&cache.shape, gx)
    }
}
