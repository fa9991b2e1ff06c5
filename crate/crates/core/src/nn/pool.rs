//! Max pooling with ceil semantics (partial windows at the border).
//!
//! The window is `(t, h, w)` with stride equal to the window. Rank-3 inputs
//! `[c, h, w]` require a time extent of 1; rank-4 inputs `[c, t, h, w]` pool
//! all three trailing axes. A window of `(T, 1, 1)` collapses the time axis,
//! which is how the 3D architectures aggregate time before their dense head.

use super::layer::{Layer, LayerKind, Mode};
use super::tensor::Tensor;
use crate::{Error, Result};

pub struct MaxPool {
    window: (usize, usize, usize),
    cache: Option<PoolCache>,
}

struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

fn ceil_div(a: usize, b: usize) -> usize {
    (a + b - 1) / b
}

impl MaxPool {
    pub fn new(window: (usize, usize, usize)) -> Result<Self> {
        if window.0 == 0 || window.1 == 0 || window.2 == 0 {
            return Err(Error::invalid("maxpool window extents must be positive"));
        }
        Ok(MaxPool {
            window,
            cache: None,
        })
    }

    /// Spatial 2x2 pool, time axis untouched.
    pub fn spatial_2x2() -> Self {
        MaxPool {
            window: (1, 2, 2),
            cache: None,
        }
    }

    /// Collapses a time axis of extent `t` to 1.
    pub fn over_time(t: usize) -> Result<Self> {
        MaxPool::new((t, 1, 1))
    }

    pub fn window(&self) -> (usize, usize, usize) {
        self.window
    }

    /// (channels, t, h, w) view of the input, with t = 1 for rank-3 input.
    fn split_dims(&self, input: &[usize]) -> Result<(usize, usize, usize, usize)> {
        match input.len() {
            3 => {
                if self.window.0 != 1 {
                    return Err(Error::invalid(
                        "maxpool with a time window needs a [c, t, h, w] input",
                    ));
                }
                Ok((input[0], 1, input[1], input[2]))
            }
            4 => Ok((input[0], input[1], input[2], input[3])),
            _ => Err(Error::invalid(format!(
                "maxpool expects a rank-3 or rank-4 input, got {input:?}"
            ))),
        }
    }
}

impl Layer for MaxPool {
    fn kind(&self) -> LayerKind {
        LayerKind::MaxPool
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (c, t, h, w) = self.split_dims(input)?;
        let (wt, wh, ww) = self.window;
        let (to, ho, wo) = (ceil_div(t, wt), ceil_div(h, wh), ceil_div(w, ww));
        Ok(if input.len() == 3 {
            vec![c, ho, wo]
        } else {
            vec![c, to, ho, wo]
        })
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _seed: u64) -> Result<Tensor> {
        let out_shape = self.output_shape(input.shape())?;
        let (c, t, h, w) = self.split_dims(input.shape())?;
        let (wt, wh, ww) = self.window;
        let (to, ho, wo) = (ceil_div(t, wt), ceil_div(h, wh), ceil_div(w, ww));

        let x = input.data();
        let mut out = Vec::with_capacity(c * to * ho * wo);
        let mut argmax = Vec::with_capacity(out.capacity());
        for ch in 0..c {
            for ot in 0..to {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for dt in ot * wt..((ot + 1) * wt).min(t) {
                            for dh in oh * wh..((oh + 1) * wh).min(h) {
                                for dw in ow * ww..((ow + 1) * ww).min(w) {
                                    let idx = ((ch * t + dt) * h + dh) * w + dw;
                                    // First occurrence wins ties.
                                    if x[idx] > best {
                                        best = x[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(best_idx);
                    }
                }
            }
        }
        self.cache = Some(PoolCache {
            input_shape: input.shape().to_vec(),
            argmax,
        });
        Tensor::from_vec(&out_shape, out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        let out_shape = self.output_shape(&cache.input_shape)?;
        super::layer::expect_shape("maxpool backward", &out_shape, grad_out.shape())?;
        let mut gx = vec![0.0; cache.input_shape.iter().product()];
        for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
            gx[idx] += g;
        }
        Tensor::from_vec(&cache.input_shape, gx)
    }
}
