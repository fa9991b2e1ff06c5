//! Sequence-to-one LSTM layer.
//!
//! Consumes a `[T, D]` tensor (one row per time step) and emits the final
//! hidden state only. Gate blocks are stacked in the order input, forget,
//! output, candidate; the forget-gate bias is initialised to 1.
//!
//! Two dropout mechanisms, both with one mask per sequence applied
//! identically at every time step: `dropout` on the inputs and
//! `recurrent_dropout` on the recurrent hidden state.

use rand_chacha::ChaCha8Rng;

use super::dropout::{check_rate, scale_mask};
use super::layer::{uniform_fan_in, Layer, LayerKind, Mode};
use super::tensor::Tensor;
use crate::seed;
use crate::{Error, Result};

pub struct Lstm {
    w_x: Tensor,  // [4N, D]
    w_h: Tensor,  // [4N, N]
    bias: Tensor, // [4N]
    in_dim: usize,
    nodes: usize,
    dropout: f64,
    recurrent_dropout: f64,
    cache: Option<LstmCache>,
}

struct StepCache {
    x_dropped: Vec<f64>,
    h_prev_dropped: Vec<f64>,
    gate_i: Vec<f64>,
    gate_f: Vec<f64>,
    gate_o: Vec<f64>,
    gate_g: Vec<f64>,
    c_prev: Vec<f64>,
    c: Vec<f64>,
}

struct LstmCache {
    steps: Vec<StepCache>,
    in_mask: Option<Vec<f64>>,
    rec_mask: Option<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn new(
        in_dim: usize,
        nodes: usize,
        dropout: f64,
        recurrent_dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if in_dim == 0 || nodes == 0 {
            return Err(Error::invalid("lstm dims must be positive"));
        }
        check_rate(dropout)?;
        check_rate(recurrent_dropout)?;
        let w_x = Tensor::from_vec(&[4 * nodes, in_dim], uniform_fan_in(rng, in_dim, 4 * nodes * in_dim))?;
        let w_h = Tensor::from_vec(&[4 * nodes, nodes], uniform_fan_in(rng, nodes, 4 * nodes * nodes))?;
        let mut bias = Tensor::zeros(&[4 * nodes]);
        // Forget-gate block starts open.
        bias.data_mut()[nodes..2 * nodes].iter_mut().for_each(|b| *b = 1.0);
        Ok(Lstm {
            w_x,
            w_h,
            bias,
            in_dim,
            nodes,
            dropout,
            recurrent_dropout,
            cache: None,
        })
    }

    /// Builds from explicit weights: `w_x [4N, D]`, `w_h [4N, N]`, `bias [4N]`.
    pub fn from_weights(w_x: Tensor, w_h: Tensor, bias: Tensor) -> Result<Self> {
        if w_x.rank() != 2 || w_x.shape()[0] % 4 != 0 {
            return Err(Error::invalid(format!(
                "lstm input weights must have shape [4N, D], got {:?}",
                w_x.shape()
            )));
        }
        let nodes = w_x.shape()[0] / 4;
        let in_dim = w_x.shape()[1];
        if w_h.shape() != [4 * nodes, nodes] {
            return Err(Error::ShapeMismatch {
                context: "lstm recurrent weights".into(),
                expected: vec![4 * nodes, nodes],
                got: w_h.shape().to_vec(),
            });
        }
        if bias.shape() != [4 * nodes] {
            return Err(Error::ShapeMismatch {
                context: "lstm bias".into(),
                expected: vec![4 * nodes],
                got: bias.shape().to_vec(),
            });
        }
        Ok(Lstm {
            w_x,
            w_h,
            bias,
            in_dim,
            nodes,
            dropout: 0.0,
            recurrent_dropout: 0.0,
            cache: None,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Explicit list-of-vectors entry point; rejects empty sequences and
    /// ragged step dimensions.
    pub fn run(&mut self, steps: &[Vec<f64>], mode: Mode, seed_value: u64) -> Result<Tensor> {
        if steps.is_empty() {
            return Err(Error::invalid("lstm sequence must not be empty"));
        }
        if let Some(bad) = steps.iter().find(|s| s.len() != self.in_dim) {
            return Err(Error::ShapeMismatch {
                context: "lstm sequence step".into(),
                expected: vec![self.in_dim],
                got: vec![bad.len()],
            });
        }
        let flat: Vec<f64> = steps.iter().flatten().copied().collect();
        let input = Tensor::from_vec(&[steps.len(), self.in_dim], flat)?;
        self.forward(&input, mode, seed_value)
    }

    /// z = W_x x + W_h h + b for one step; returns the four gate vectors.
    #[allow(clippy::type_complexity)]
    fn gates(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.nodes;
        let d = self.in_dim;
        let wx = self.w_x.data();
        let wh = self.w_h.data();
        let b = self.bias.data();
        let mut z = vec![0.0; 4 * n];
        for (r, zr) in z.iter_mut().enumerate() {
            let mut acc = b[r];
            let xrow = &wx[r * d..(r + 1) * d];
            for (w, xi) in xrow.iter().zip(x) {
                acc += w * xi;
            }
            let hrow = &wh[r * n..(r + 1) * n];
            for (w, hi) in hrow.iter().zip(h) {
                acc += w * hi;
            }
            *zr = acc;
        }
        let gate_i: Vec<f64> = z[0..n].iter().map(|&v| sigmoid(v)).collect();
        let gate_f: Vec<f64> = z[n..2 * n].iter().map(|&v| sigmoid(v)).collect();
        let gate_o: Vec<f64> = z[2 * n..3 * n].iter().map(|&v| sigmoid(v)).collect();
        let gate_g: Vec<f64> = z[3 * n..4 * n].iter().map(|&v| v.tanh()).collect();
        (gate_i, gate_f, gate_o, gate_g)
    }
}

impl Layer for Lstm {
    fn kind(&self) -> LayerKind {
        LayerKind::Lstm
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 2 || input[1] != self.in_dim {
            return Err(Error::ShapeMismatch {
                context: "lstm input (expects [steps, dim])".into(),
                expected: vec![input.first().copied().unwrap_or(0), self.in_dim],
                got: input.to_vec(),
            });
        }
        Ok(vec![self.nodes])
    }

    fn forward(&mut self, input: &Tensor, mode: Mode, seed_value: u64) -> Result<Tensor> {
        self.output_shape(input.shape())?;
        let steps = input.shape()[0];
        let n = self.nodes;
        let d = self.in_dim;

        let train = mode == Mode::Train;
        let in_mask = (train && self.dropout > 0.0)
            .then(|| scale_mask(d, self.dropout, seed::derive(seed_value, &[1])));
        let rec_mask = (train && self.recurrent_dropout > 0.0)
            .then(|| scale_mask(n, self.recurrent_dropout, seed::derive(seed_value, &[2])));

        let mut h = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut caches = Vec::with_capacity(steps);
        for t in 0..steps {
            let x_raw = &input.data()[t * d..(t + 1) * d];
            let x_dropped: Vec<f64> = match &in_mask {
                Some(m) => x_raw.iter().zip(m).map(|(x, m)| x * m).collect(),
                None => x_raw.to_vec(),
            };
            let h_prev_dropped: Vec<f64> = match &rec_mask {
                Some(m) => h.iter().zip(m).map(|(h, m)| h * m).collect(),
                None => h.clone(),
            };
            let (gate_i, gate_f, gate_o, gate_g) = self.gates(&x_dropped, &h_prev_dropped);
            let c_prev = c.clone();
            for j in 0..n {
                c[j] = gate_f[j] * c_prev[j] + gate_i[j] * gate_g[j];
                h[j] = gate_o[j] * c[j].tanh();
            }
            caches.push(StepCache {
                x_dropped,
                h_prev_dropped,
                gate_i,
                gate_f,
                gate_o,
                gate_g,
                c_prev,
                c: c.clone(),
            });
        }
        self.cache = Some(LstmCache {
            steps: caches,
            in_mask,
            rec_mask,
        });
        Tensor::from_vec(&[n], h)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        let n = self.nodes;
        let d = self.in_dim;
        super::layer::expect_shape("lstm backward", &[n], grad_out.shape())?;

        let steps = cache.steps.len();
        let wx = self.w_x.data().to_vec();
        let wh = self.w_h.data().to_vec();
        let mut gx = vec![0.0; steps * d];
        let mut dh = grad_out.data().to_vec();
        let mut dc = vec![0.0; n];
        // Local gradient buffers; accumulated into tensor grads at the end.
        let mut gwx = vec![0.0; 4 * n * d];
        let mut gwh = vec![0.0; 4 * n * n];
        let mut gb = vec![0.0; 4 * n];

        for t in (0..steps).rev() {
            let s = &cache.steps[t];
            let mut dz = vec![0.0; 4 * n];
            let mut dh_prev = vec![0.0; n];
            let mut dc_prev = vec![0.0; n];
            for j in 0..n {
                let tc = s.c[j].tanh();
                let o = s.gate_o[j];
                let i = s.gate_i[j];
                let f = s.gate_f[j];
                let g = s.gate_g[j];
                let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
                dz[2 * n + j] = dh[j] * tc * o * (1.0 - o); // output gate
                dz[j] = dcj * g * i * (1.0 - i); // input gate
                dz[3 * n + j] = dcj * i * (1.0 - g * g); // candidate
                dz[n + j] = dcj * s.c_prev[j] * f * (1.0 - f); // forget gate
                dc_prev[j] = dcj * f;
            }
            for r in 0..4 * n {
                let g = dz[r];
                if g == 0.0 {
                    continue;
                }
                gb[r] += g;
                let xrow = r * d;
                for (k, xv) in s.x_dropped.iter().enumerate() {
                    gwx[xrow + k] += g * xv;
                    gx[t * d + k] += g * wx[xrow + k];
                }
                let hrow = r * n;
                for (k, hv) in s.h_prev_dropped.iter().enumerate() {
                    gwh[hrow + k] += g * hv;
                    dh_prev[k] += g * wh[hrow + k];
                }
            }
            if let Some(m) = &cache.in_mask {
                for (k, mk) in m.iter().enumerate() {
                    gx[t * d + k] *= mk;
                }
            }
            if let Some(m) = &cache.rec_mask {
                for (v, mk) in dh_prev.iter_mut().zip(m) {
                    *v *= mk;
                }
            }
            dh = dh_prev;
            dc = dc_prev;
        }

        for (dst, src) in self.w_x.grad_mut().iter_mut().zip(&gwx) {
            *dst += src;
        }
        for (dst, src) in self.w_h.grad_mut().iter_mut().zip(&gwh) {
            *dst += src;
        }
        for (dst, src) in self.bias.grad_mut().iter_mut().zip(&gb) {
            *dst += src;
        }
        Tensor::from_vec(&[steps, d], gx)
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.w_x, &self.w_h, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.bias]
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["w_x", "w_h", "bias"]
    }
}
