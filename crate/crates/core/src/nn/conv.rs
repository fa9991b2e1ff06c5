//! Direct-loop 2D and 3D convolutions.
//!
//! Valid-mode, stride 1. `Conv2d` optionally zero-pads; kernels are
//! `[out_ch, in_ch, kh, kw]` and `[out_ch, in_ch, kt, kh, kw]`.

use rand_chacha::ChaCha8Rng;

use super::layer::{uniform_fan_in, Layer, LayerKind, Mode};
use super::tensor::Tensor;
use crate::{Error, Result};

pub struct Conv2d {
    kernel: Tensor,
    bias: Tensor,
    pad: (usize, usize),
    cache: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        pad: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 || kh == 0 || kw == 0 {
            return Err(Error::invalid("conv2d extents must be positive"));
        }
        let fan_in = in_ch * kh * kw;
        let kernel = Tensor::from_vec(
            &[out_ch, in_ch, kh, kw],
            uniform_fan_in(rng, fan_in, out_ch * fan_in),
        )?;
        Ok(Conv2d {
            kernel,
            bias: Tensor::zeros(&[out_ch]),
            pad,
            cache: None,
        })
    }

    /// Builds from explicit weights; kernel `[out_ch, in_ch, kh, kw]`, bias `[out_ch]`.
    pub fn from_weights(kernel: Tensor, bias: Tensor, pad: (usize, usize)) -> Result<Self> {
        if kernel.rank() != 4 {
            return Err(Error::invalid(format!(
                "conv2d kernel must have shape [out_ch, in_ch, kh, kw], got {:?}",
                kernel.shape()
            )));
        }
        if bias.shape() != [kernel.shape()[0]] {
            return Err(Error::ShapeMismatch {
                context: "conv2d bias".into(),
                expected: vec![kernel.shape()[0]],
                got: bias.shape().to_vec(),
            });
        }
        Ok(Conv2d {
            kernel,
            bias,
            pad,
            cache: None,
        })
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.kernel.shape();
        (s[0], s[1], s[2], s[3])
    }
}

impl Layer for Conv2d {
    fn kind(&self) -> LayerKind {
        LayerKind::Conv2d
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (out_ch, in_ch, kh, kw) = self.dims();
        let (ph, pw) = self.pad;
        if input.len() != 3 {
            return Err(Error::invalid(format!(
                "conv2d expects a [channels, height, width] input, got {input:?}"
            )));
        }
        if input[0] != in_ch {
            return Err(Error::ShapeMismatch {
                context: "conv2d input channels vs kernel in_ch".into(),
                expected: vec![in_ch, input[1], input[2]],
                got: input.to_vec(),
            });
        }
        let (h, w) = (input[1] + 2 * ph, input[2] + 2 * pw);
        if kh > h || kw > w {
            return Err(Error::invalid(format!(
                "conv2d kernel {kh}x{kw} larger than (padded) input {h}x{w}"
            )));
        }
        Ok(vec![out_ch, h - kh + 1, w - kw + 1])
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _seed: u64) -> Result<Tensor> {
        let out_shape = self.output_shape(input.shape())?;
        let (out_ch, in_ch, kh, kw) = self.dims();
        let (ph, pw) = self.pad;
        let (h, w) = (input.shape()[1], input.shape()[2]);
        let (ho, wo) = (out_shape[1], out_shape[2]);

        let x = input.data();
        let k = self.kernel.data();
        let b = self.bias.data();
        let mut out = vec![0.0; out_ch * ho * wo];
        for f in 0..out_ch {
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = b[f];
                    for c in 0..in_ch {
                        for i in 0..kh {
                            let ih = oh + i;
                            if ih < ph || ih - ph >= h {
                                continue;
                            }
                            let ih = ih - ph;
                            for j in 0..kw {
                                let iw = ow + j;
                                if iw < pw || iw - pw >= w {
                                    continue;
                                }
                                let iw = iw - pw;
                                acc += x[(c * h + ih) * w + iw]
                                    * k[((f * in_ch + c) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[(f * ho + oh) * wo + ow] = acc;
                }
            }
        }
        self.cache = Some(input.detached());
        Tensor::from_vec(&out_shape, out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        let out_shape = self.output_shape(input.shape())?;
        super::layer::expect_shape("conv2d backward", &out_shape, grad_out.shape())?;

        let (out_ch, in_ch, kh, kw) = self.dims();
        let (ph, pw) = self.pad;
        let (h, w) = (input.shape()[1], input.shape()[2]);
        let (ho, wo) = (out_shape[1], out_shape[2]);

        let x = input.data();
        let go = grad_out.data();
        let mut gx = vec![0.0; x.len()];
        {
            let k = self.kernel.data().to_vec();
            let gk = self.kernel.grad_mut();
            let gb = self.bias.grad_mut();
            for f in 0..out_ch {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let g = go[(f * ho + oh) * wo + ow];
                        gb[f] += g;
                        for c in 0..in_ch {
                            for i in 0..kh {
                                let ih = oh + i;
                                if ih < ph || ih - ph >= h {
                                    continue;
                                }
                                let ih = ih - ph;
                                for j in 0..kw {
                                    let iw = ow + j;
                                    if iw < pw || iw - pw >= w {
                                        continue;
                                    }
                                    let iw = iw - pw;
                                    let xi = (c * h + ih) * w + iw;
                                    let ki = ((f * in_ch + c) * kh + i) * kw + j;
                                    gk[ki] += g * x[xi];
                                    gx[xi] += g * k[ki];
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(input.shape(), gx)
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel, &mut self.bias]
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["kernel", "bias"]
    }
}

pub struct Conv3d {
    kernel: Tensor,
    bias: Tensor,
    cache: Option<Tensor>,
}

impl Conv3d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kt: usize,
        kh: usize,
        kw: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 || kt == 0 || kh == 0 || kw == 0 {
            return Err(Error::invalid("conv3d extents must be positive"));
        }
        let fan_in = in_ch * kt * kh * kw;
        let kernel = Tensor::from_vec(
            &[out_ch, in_ch, kt, kh, kw],
            uniform_fan_in(rng, fan_in, out_ch * fan_in),
        )?;
        Ok(Conv3d {
            kernel,
            bias: Tensor::zeros(&[out_ch]),
            cache: None,
        })
    }

    /// Builds from explicit weights; kernel `[out_ch, in_ch, kt, kh, kw]`.
    pub fn from_weights(kernel: Tensor, bias: Tensor) -> Result<Self> {
        if kernel.rank() != 5 {
            return Err(Error::invalid(format!(
                "conv3d kernel must have shape [out_ch, in_ch, kt, kh, kw], got {:?}",
                kernel.shape()
            )));
        }
        if bias.shape() != [kernel.shape()[0]] {
            return Err(Error::ShapeMismatch {
                context: "conv3d bias".into(),
                expected: vec![kernel.shape()[0]],
                got: bias.shape().to_vec(),
            });
        }
        Ok(Conv3d {
            kernel,
            bias,
            cache: None,
        })
    }

    fn dims(&self) -> (usize, usize, usize, usize, usize) {
        let s = self.kernel.shape();
        (s[0], s[1], s[2], s[3], s[4])
    }
}

impl Layer for Conv3d {
    fn kind(&self) -> LayerKind {
        LayerKind::Conv3d
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (out_ch, in_ch, kt, kh, kw) = self.dims();
        if input.len() != 4 {
            return Err(Error::invalid(format!(
                "conv3d expects a [channels, time, height, width] input, got {input:?}"
            )));
        }
        if input[0] != in_ch {
            return Err(Error::ShapeMismatch {
                context: "conv3d input channels vs kernel in_ch".into(),
                expected: vec![in_ch, input[1], input[2], input[3]],
                got: input.to_vec(),
            });
        }
        let (t, h, w) = (input[1], input[2], input[3]);
        if kt > t {
            return Err(Error::invalid(format!(
                "conv3d kernel time extent {kt} exceeds input time extent {t}"
            )));
        }
        if kh > h || kw > w {
            return Err(Error::invalid(format!(
                "conv3d kernel {kh}x{kw} larger than input {h}x{w}"
            )));
        }
        Ok(vec![out_ch, t - kt + 1, h - kh + 1, w - kw + 1])
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _seed: u64) -> Result<Tensor> {
        let out_shape = self.output_shape(input.shape())?;
        let (out_ch, in_ch, kt, kh, kw) = self.dims();
        let (t, h, w) = (input.shape()[1], input.shape()[2], input.shape()[3]);
        let (to, ho, wo) = (out_shape[1], out_shape[2], out_shape[3]);

        let x = input.data();
        let k = self.kernel.data();
        let b = self.bias.data();
        let mut out = vec![0.0; out_ch * to * ho * wo];
        for f in 0..out_ch {
            for ot in 0..to {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut acc = b[f];
                        for c in 0..in_ch {
                            for dt in 0..kt {
                                for i in 0..kh {
                                    for j in 0..kw {
                                        acc += x[((c * t + ot + dt) * h + oh + i) * w + ow + j]
                                            * k[(((f * in_ch + c) * kt + dt) * kh + i) * kw + j];
                                    }
                                }
                            }
                        }
                        out[((f * to + ot) * ho + oh) * wo + ow] = acc;
                    }
                }
            }
        }
        self.cache = Some(input.detached());
        Tensor::from_vec(&out_shape, out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        let out_shape = self.output_shape(input.shape())?;
        super::layer::expect_shape("conv3d backward", &out_shape, grad_out.shape())?;

        let (out_ch, in_ch, kt, kh, kw) = self.dims();
        let (t, h, w) = (input.shape()[1], input.shape()[2], input.shape()[3]);
        let (to, ho, wo) = (out_shape[1], out_shape[2], out_shape[3]);

        let x = input.data();
        let go = grad_out.data();
        let mut gx = vec![0.0; x.len()];
        {
            let k = self.kernel.data().to_vec();
            let gk = self.kernel.grad_mut();
            let gb = self.bias.grad_mut();
            for f in 0..out_ch {
                for ot in 0..to {
                    for oh in 0..ho {
                        for ow in 0..wo {
                            let g = go[((f * to + ot) * ho + oh) * wo + ow];
                            gb[f] += g;
                            for c in 0..in_ch {
                                for dt in 0..kt {
                                    for i in 0..kh {
                                        for j in 0..kw {
                                            let xi =
                                                ((c * t + ot + dt) * h + oh + i) * w + ow + j;
                                            let ki = (((f * in_ch + c) * kt + dt) * kh + i) * kw
                                                + j;
                                            gk[ki] += g * x[xi];
                                            gx[xi] += g * k[ki];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(input.shape(), gx)
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel, &mut self.bias]
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["kernel", "bias"]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn identity_kernel_passes_input_through() {
        let kernel = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let mut conv = Conv2d::from_weights(kernel, bias, (0, 0)).unwrap();
        let x = Tensor::from_vec(&[1, 2, 3], vec![1.0, -2.0, 3.0, 4.0, 0.5, -6.0]).unwrap();
        let y = conv.forward(&x, Mode::Infer, 0).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_input_yields_bias() {
        let kernel = Tensor::from_vec(&[2, 1, 2, 2], vec![0.3; 8]).unwrap();
        let bias = Tensor::from_vec(&[2], vec![1.25, -0.5]).unwrap();
        let mut conv = Conv2d::from_weights(kernel, bias, (0, 0)).unwrap();
        let x = Tensor::zeros(&[1, 3, 3]);
        let y = conv.forward(&x, Mode::Infer, 0).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2]);
        for (i, v) in y.data().iter().enumerate() {
            let expect = if i < 4 { 1.25 } else { -0.5 };
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn channel_mismatch_reports_both_shapes() {
        let mut rng = seed::rng(0, &[seed::stream::INIT]);
        let mut conv = Conv2d::new(2, 3, 2, 2, (0, 0), &mut rng).unwrap();
        let x = Tensor::zeros(&[3, 5, 5]);
        let err = conv.forward(&x, Mode::Infer, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 5, 5]") && msg.contains("[3, 5, 5]"), "{msg}");
    }

    #[test]
    fn conv3d_identity_and_time_collapse() {
        let kernel = Tensor::from_vec(&[1, 1, 1, 1, 1], vec![1.0]).unwrap();
        let mut conv = Conv3d::from_weights(kernel, Tensor::zeros(&[1])).unwrap();
        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = conv.forward(&x, Mode::Infer, 0).unwrap();
        assert_eq!(y.data(), x.data());

        // kt == T collapses the time axis to extent 1.
        let mut rng = seed::rng(1, &[seed::stream::INIT]);
        let conv = Conv3d::new(1, 2, 4, 2, 2, &mut rng).unwrap();
        assert_eq!(conv.output_shape(&[1, 4, 6, 4]).unwrap(), vec![2, 1, 5, 3]);
    }

    #[test]
    fn conv3d_rejects_kernel_time_beyond_input() {
        let mut rng = seed::rng(2, &[seed::stream::INIT]);
        let conv = Conv3d::new(1, 1, 5, 1, 1, &mut rng).unwrap();
        assert!(conv.output_shape(&[1, 4, 3, 3]).is_err());
    }
}
