//! A sequential layer stack with a softmax/cross-entropy head.

use super::layer::{Layer, LayerKind, Mode};
use super::loss::SoftmaxXent;
use super::tensor::Tensor;
use crate::seed;
use crate::{Error, Result};

pub struct Network {
    layers: Vec<Box<dyn Layer>>,
    head: SoftmaxXent,
    classes: usize,
}

impl Network {
    pub fn new(classes: usize) -> Self {
        Network {
            layers: Vec::new(),
            head: SoftmaxXent::new(),
            classes,
        }
    }

    pub fn push(&mut self, layer: Box<dyn Layer>) {
        self.layers.push(layer);
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layer_kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|l| l.kind()).collect()
    }

    /// Shape the stack produces for `input`, validating every layer.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
        }
        if shape != [self.classes] {
            return Err(Error::ShapeMismatch {
                context: "network logits".into(),
                expected: vec![self.classes],
                got: shape,
            });
        }
        Ok(shape)
    }

    /// Runs the stack; per-layer dropout seeds derive from `seed_value`.
    pub fn forward(&mut self, input: &Tensor, mode: Mode, seed_value: u64) -> Result<Tensor> {
        let mut x = input.detached();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            x = layer.forward(&x, mode, seed::derive(seed_value, &[i as u64]))?;
        }
        Ok(x)
    }

    /// Forward through the loss head, recording state for `backward`.
    pub fn forward_loss(
        &mut self,
        input: &Tensor,
        label: usize,
        mode: Mode,
        seed_value: u64,
    ) -> Result<(f64, Tensor)> {
        let logits = self.forward(input, mode, seed_value)?;
        self.head.forward(&logits, label)
    }

    /// Propagates the recorded loss gradient, accumulating parameter grads.
    pub fn backward(&mut self) -> Result<()> {
        let mut g = self.head.backward()?;
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(())
    }

    /// Class probabilities in inference mode (dropout disabled).
    pub fn predict_probs(&mut self, input: &Tensor) -> Result<Vec<f64>> {
        let logits = self.forward(input, Mode::Infer, 0)?;
        let (_, probs) = super::loss::softmax_cross_entropy(logits.data(), 0)?;
        Ok(probs)
    }

    /// Argmax class; first index wins ties.
    pub fn predict(&mut self, input: &Tensor) -> Result<usize> {
        let probs = self.predict_probs(input)?;
        Ok(argmax(&probs))
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let kind = layer.kind().as_str();
            for (name, p) in layer.param_names().into_iter().zip(layer.params()) {
                out.push((format!("layer{i}.{kind}.{name}"), p));
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let kind = layer.kind().as_str();
            let names = layer.param_names();
            for (name, p) in names.into_iter().zip(layer.params_mut()) {
                out.push((format!("layer{i}.{kind}.{name}"), p));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for (_, p) in self.named_params_mut() {
            p.grad_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Copy of all parameter tensors, gradients stripped.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.named_params().iter().map(|(_, p)| p.detached()).collect()
    }

    pub fn restore(&mut self, weights: &[Tensor]) -> Result<()> {
        let mut params = self.named_params_mut();
        if params.len() != weights.len() {
            return Err(Error::invalid(format!(
                "snapshot has {} tensors, network has {} parameters",
                weights.len(),
                params.len()
            )));
        }
        for ((name, p), w) in params.iter_mut().zip(weights) {
            if p.shape() != w.shape() {
                return Err(Error::ShapeMismatch {
                    context: format!("restore {name}"),
                    expected: p.shape().to_vec(),
                    got: w.shape().to_vec(),
                });
            }
            p.data_mut().copy_from_slice(w.data());
        }
        Ok(())
    }

    /// Layer blocks for checkpoint serialisation, head included.
    pub fn checkpoint_entries(&self) -> Vec<(LayerKind, Vec<&Tensor>)> {
        let mut out: Vec<(LayerKind, Vec<&Tensor>)> = self
            .layers
            .iter()
            .map(|l| (l.kind(), l.params()))
            .collect();
        out.push((LayerKind::SoftmaxXent, Vec::new()));
        out
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Box<dyn Layer>] {
        &mut self.layers
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::{Dense, Relu};

    fn tiny_net() -> Network {
        let mut net = Network::new(2);
        let w1 = Tensor::from_vec(&[2, 2], vec![0.5, -0.3, 0.8, 0.1]).unwrap();
        let b1 = Tensor::from_vec(&[2], vec![0.1, -0.2]).unwrap();
        net.push(Box::new(Dense::from_weights(w1, b1).unwrap()));
        net.push(Box::new(Relu::new()));
        let w2 = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b2 = Tensor::zeros(&[2]);
        net.push(Box::new(Dense::from_weights(w2, b2).unwrap()));
        net
    }

    #[test]
    fn backward_before_forward_rejected() {
        let mut net = tiny_net();
        assert!(matches!(net.backward(), Err(Error::BackwardBeforeForward)));
    }

    #[test]
    fn double_backward_rejected() {
        let mut net = tiny_net();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        net.forward_loss(&x, 0, Mode::Train, 0).unwrap();
        net.backward().unwrap();
        assert!(net.backward().is_err());
    }

    /// A parameter the loss cannot reach (its unit is killed by ReLU)
    /// receives an exactly-zero gradient.
    #[test]
    fn unreachable_parameter_has_zero_gradient() {
        let mut net = Network::new(2);
        // Unit 0 pre-activation is always negative for positive inputs.
        let w1 = Tensor::from_vec(&[2, 1], vec![-1.0, 1.0]).unwrap();
        let b1 = Tensor::from_vec(&[2], vec![-0.5, 0.0]).unwrap();
        net.push(Box::new(Dense::from_weights(w1, b1).unwrap()));
        net.push(Box::new(Relu::new()));
        let w2 = Tensor::from_vec(&[2, 2], vec![0.7, 0.2, -0.4, 0.9]).unwrap();
        net.push(Box::new(Dense::from_weights(w2, Tensor::zeros(&[2])).unwrap()));

        let x = Tensor::from_vec(&[1], vec![2.0]).unwrap();
        net.zero_grads();
        net.forward_loss(&x, 1, Mode::Train, 0).unwrap();
        net.backward().unwrap();

        let params = net.named_params();
        let (name, w1) = &params[0];
        assert!(name.contains("layer0"));
        // Row 0 feeds the dead ReLU unit.
        assert_eq!(w1.grad().unwrap()[0], 0.0);
        // Row 1 is live.
        assert_ne!(w1.grad().unwrap()[1], 0.0);
    }

    #[test]
    fn snapshot_restore_round_trip() {
        let mut net = tiny_net();
        let snap = net.snapshot();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let before = net.forward(&x, Mode::Infer, 0).unwrap();
        // Perturb and restore.
        for (_, p) in net.named_params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v += 1.0);
        }
        net.restore(&snap).unwrap();
        let after = net.forward(&x, Mode::Infer, 0).unwrap();
        assert_eq!(before.data(), after.data());
    }
}
