//! Dense layer plus the stateless ReLU and Flatten layers.

use rand_chacha::ChaCha8Rng;

use super::layer::{expect_shape, uniform_fan_in, Layer, LayerKind, Mode};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Affine map `y = W x + b` on a rank-1 input. Weights are `[out, in]`.
pub struct Dense {
    w: Tensor,
    b: Tensor,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid("dense dims must be positive"));
        }
        Ok(Dense {
            w: Tensor::from_vec(&[out_dim, in_dim], uniform_fan_in(rng, in_dim, out_dim * in_dim))?,
            b: Tensor::zeros(&[out_dim]),
            cache: None,
        })
    }

    pub fn from_weights(w: Tensor, b: Tensor) -> Result<Self> {
        if w.rank() != 2 {
            return Err(Error::invalid(format!(
                "dense weights must have shape [out, in], got {:?}",
                w.shape()
            )));
        }
        if b.shape() != [w.shape()[0]] {
            return Err(Error::ShapeMismatch {
                context: "dense bias".into(),
                expected: vec![w.shape()[0]],
                got: b.shape().to_vec(),
            });
        }
        Ok(Dense { w, b, cache: None })
    }
}

impl Layer for Dense {
    fn kind(&self) -> LayerKind {
        LayerKind::Dense
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (out_dim, in_dim) = (self.w.shape()[0], self.w.shape()[1]);
        expect_shape("dense input", &[in_dim], input)?;
        Ok(vec![out_dim])
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _seed: u64) -> Result<Tensor> {
        let out_shape = self.output_shape(input.shape())?;
        let (out_dim, in_dim) = (self.w.shape()[0], self.w.shape()[1]);
        let x = input.data();
        let w = self.w.data();
        let mut y = self.b.data().to_vec();
        for (o, yo) in y.iter_mut().enumerate().take(out_dim) {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            *yo += row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
        }
        self.cache = Some(input.detached());
        Tensor::from_vec(&out_shape, y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        let (out_dim, in_dim) = (self.w.shape()[0], self.w.shape()[1]);
        expect_shape("dense backward", &[out_dim], grad_out.shape())?;

        let x = input.data();
        let go = grad_out.data();
        let w = self.w.data().to_vec();
        let mut gx = vec![0.0; in_dim];
        {
            let gw = self.w.grad_mut();
            for o in 0..out_dim {
                let g = go[o];
                let row = o * in_dim;
                for i in 0..in_dim {
                    gw[row + i] += g * x[i];
                    gx[i] += g * w[row + i];
                }
            }
            let gb = self.b.grad_mut();
            for (gbo, g) in gb.iter_mut().zip(go) {
                *gbo += g;
            }
        }
        Tensor::from_vec(&[in_dim], gx)
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["w", "b"]
    }
}

#[derive(Default)]
pub struct Relu {
    cache: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { cache: None }
    }
}

impl Layer for Relu {
    fn kind(&self) -> LayerKind {
        LayerKind::Relu
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _seed: u64) -> Result<Tensor> {
        self.cache = Some(input.detached());
        let out: Vec<f64> = input.data().iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_vec(input.shape(), out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        expect_shape("relu backward", input.shape(), grad_out.shape())?;
        let gx: Vec<f64> = input
            .data()
            .iter()
            .zip(grad_out.data())
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect();
        Tensor::from_vec(input.shape(), gx)
    }
}

#[derive(Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten { cache: None }
    }
}

impl Layer for Flatten {
    fn kind(&self) -> LayerKind {
        LayerKind::Flatten
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(vec![input.iter().product()])
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _seed: u64) -> Result<Tensor> {
        self.cache = Some(input.shape().to_vec());
        Tensor::from_vec(&[input.len()], input.data().to_vec())
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        expect_shape(
            "flatten backward",
            &[shape.iter().product::<usize>()],
            grad_out.shape(),
        )?;
        Tensor::from_vec(&shape, grad_out.data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single dense layer under squared-error loss: dW must equal the outer
    /// product of the output-error vector with the input.
    #[test]
    fn dense_gradient_is_outer_product() {
        let w = Tensor::from_vec(&[2, 3], vec![0.5, -0.2, 0.1, 0.4, 0.3, -0.7]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.1, -0.1]).unwrap();
        let mut dense = Dense::from_weights(w, b).unwrap();
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let target = [0.3, -0.4];

        let y = dense.forward(&x, Mode::Train, 0).unwrap();
        // L = 0.5 * sum((y - t)^2)  =>  dL/dy = y - t
        let dy: Vec<f64> = y.data().iter().zip(target).map(|(yi, t)| yi - t).collect();
        dense
            .backward(&Tensor::from_vec(&[2], dy.clone()).unwrap())
            .unwrap();

        let gw = dense.w.grad().unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(gw[o * 3 + i], dy[o] * x.data()[i]);
            }
        }
        assert_eq!(dense.b.grad().unwrap(), dy.as_slice());
    }

    #[test]
    fn backward_before_forward_is_rejected() {
        let mut relu = Relu::new();
        let g = Tensor::zeros(&[3]);
        assert!(matches!(
            relu.backward(&g),
            Err(Error::BackwardBeforeForward)
        ));
    }

    #[test]
    fn flatten_round_trips_shape() {
        let mut fl = Flatten::new();
        let x = Tensor::from_vec(&[2, 2, 2], (0..8).map(|v| v as f64).collect()).unwrap();
        let y = fl.forward(&x, Mode::Infer, 0).unwrap();
        assert_eq!(y.shape(), &[8]);
        let gx = fl.backward(&y).unwrap();
        assert_eq!(gx.shape(), &[2, 2, 2]);
        assert_eq!(gx.data(), x.data());
    }
}
