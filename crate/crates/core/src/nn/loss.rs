//! Softmax + cross-entropy classification head.

use super::tensor::Tensor;
use crate::{Error, Result};

/// Numerically stable softmax with cross-entropy against `label`.
/// Returns `(loss, probabilities)`, with the probabilities summing to 1.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax needs at least one logit"));
    }
    if label >= logits.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite logit {bad}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let loss = sum.ln() + max - logits[label];
    Ok((loss, probs))
}

/// Loss head for `Network`; caches probabilities for the backward pass.
#[derive(Default)]
pub struct SoftmaxXent {
    cache: Option<(Vec<f64>, usize)>,
}

impl SoftmaxXent {
    pub fn new() -> Self {
        SoftmaxXent { cache: None }
    }

    pub fn forward(&mut self, logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
        if logits.rank() != 1 {
            return Err(Error::invalid(format!(
                "softmax head expects a rank-1 logit vector, got {:?}",
                logits.shape()
            )));
        }
        let (loss, probs) = softmax_cross_entropy(logits.data(), label)?;
        self.cache = Some((probs.clone(), label));
        Ok((loss, Tensor::from_vec(logits.shape(), probs)?))
    }

    /// dL/dlogits = p - onehot(label).
    pub fn backward(&mut self) -> Result<Tensor> {
        let (mut probs, label) = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        probs[label] -= 1.0;
        let k = probs.len();
        Tensor::from_vec(&[k], probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        let (loss, probs) = softmax_cross_entropy(&[2.5; 9], 4).unwrap();
        for p in &probs {
            assert!((p - 1.0 / 9.0).abs() < 1e-15);
        }
        assert!((loss - (9.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn dominant_logit_saturates() {
        let mut logits = vec![0.0; 9];
        logits[3] = 50.0;
        let (loss, probs) = softmax_cross_entropy(&logits, 3).unwrap();
        assert!(probs[3] > 0.999_999_999);
        assert!(loss < 1e-9);
    }

    #[test]
    fn matches_direct_formula() {
        let logits = [0.3, -1.2, 2.4, 0.0, -0.5];
        let (loss, probs) = softmax_cross_entropy(&logits, 2).unwrap();
        let sum: f64 = logits.iter().map(|v| v.exp()).sum();
        for (p, l) in probs.iter().zip(logits) {
            assert!((p - l.exp() / sum).abs() < 1e-15);
        }
        assert!((loss + (logits[2].exp() / sum).ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_bad_label() {
        assert!(softmax_cross_entropy(&[1.0, f64::NAN], 0).is_err());
        assert!(softmax_cross_entropy(&[1.0, f64::INFINITY], 0).is_err());
        assert!(softmax_cross_entropy(&[1.0, 2.0], 2).is_err());
    }
}
