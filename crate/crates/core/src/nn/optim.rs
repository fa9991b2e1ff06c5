//! RMSprop: per-parameter moving average of squared gradients.
//!
//! v <- rho * v + (1 - rho) * g^2
//! theta <- theta - lr * g / (sqrt(v) + eps)

use super::tensor::Tensor;
use crate::{Error, Result};

pub struct RmsProp {
    pub learning_rate: f64,
    pub decay_rho: f64,
    pub epsilon: f64,
    accumulators: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(learning_rate: f64, decay_rho: f64, epsilon: f64) -> Result<Self> {
        if learning_rate <= 0.0 || !learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&decay_rho) || decay_rho == 0.0 {
            return Err(Error::invalid("decay rho must lie in (0, 1)"));
        }
        if epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(RmsProp {
            learning_rate,
            decay_rho,
            epsilon,
            accumulators: Vec::new(),
        })
    }

    /// Defaults: rho 0.9, eps 1e-8.
    pub fn with_defaults(learning_rate: f64) -> Result<Self> {
        RmsProp::new(learning_rate, 0.9, 1e-8)
    }

    /// Applies one update to every parameter. The whole step is rejected
    /// (no parameter touched) if any gradient is missing or non-finite.
    pub fn step(&mut self, params: &mut [(String, &mut Tensor)]) -> Result<()> {
        if self.accumulators.is_empty() {
            self.accumulators = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        }
        if self.accumulators.len() != params.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} parameters, step got {}",
                self.accumulators.len(),
                params.len()
            )));
        }
        for ((name, p), acc) in params.iter().zip(&self.accumulators) {
            match p.grad() {
                None => return Err(Error::invalid(format!("parameter `{name}` has no gradient"))),
                Some(g) => {
                    if g.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFiniteGradient { name: name.clone() });
                    }
                    if g.len() != acc.len() {
                        return Err(Error::ShapeMismatch {
                            context: format!("rmsprop accumulator for `{name}`"),
                            expected: vec![acc.len()],
                            got: vec![g.len()],
                        });
                    }
                }
            }
        }
        for ((_, p), acc) in params.iter_mut().zip(&mut self.accumulators) {
            let lr = self.learning_rate;
            let rho = self.decay_rho;
            let eps = self.epsilon;
            let grads = p.grad().expect("validated above").to_vec();
            for ((theta, v), g) in p.data_mut().iter_mut().zip(acc.iter_mut()).zip(grads) {
                *v = rho * *v + (1.0 - rho) * g * g;
                *theta -= lr * g / (v.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(data: Vec<f64>, grad: Vec<f64>) -> Tensor {
        let n = data.len();
        let mut t = Tensor::from_vec(&[n], data).unwrap();
        t.grad_mut().copy_from_slice(&grad);
        t
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut opt = RmsProp::new(0.05, 0.9, 1e-8).unwrap();
        let mut p = param(vec![1.0, -2.0, 3.0], vec![0.0; 3]);
        let before = p.data().to_vec();
        opt.step(&mut [("p".into(), &mut p)]).unwrap();
        assert_eq!(p.data(), before.as_slice());
    }

    #[test]
    fn single_step_matches_recurrence() {
        // v = 0.9*0 + 0.1*1 = 0.1; delta = -0.01 / (sqrt(0.1) + 1e-8)
        let mut opt = RmsProp::new(0.01, 0.9, 1e-8).unwrap();
        let mut p = param(vec![0.0], vec![1.0]);
        opt.step(&mut [("p".into(), &mut p)]).unwrap();
        let expected = -0.01 / (0.1f64.sqrt() + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_independent_recurrence() {
        let (lr, rho, eps) = (0.02, 0.85, 1e-8);
        let g = 0.7;
        let mut opt = RmsProp::new(lr, rho, eps).unwrap();
        let mut p = param(vec![1.5], vec![g]);
        opt.step(&mut [("p".into(), &mut p)]).unwrap();
        p.grad_mut()[0] = g;
        opt.step(&mut [("p".into(), &mut p)]).unwrap();

        let mut v = 0.0;
        let mut theta = 1.5;
        for _ in 0..2 {
            v = rho * v + (1.0 - rho) * g * g;
            theta -= lr * g / (v.sqrt() + eps);
        }
        assert!((p.data()[0] - theta).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected_with_name() {
        let mut opt = RmsProp::new(0.01, 0.9, 1e-8).unwrap();
        let mut a = param(vec![1.0], vec![0.5]);
        let mut b = param(vec![2.0], vec![f64::NAN]);
        let before_a = a.data().to_vec();
        let err = opt
            .step(&mut [("alpha".into(), &mut a), ("beta".into(), &mut b)])
            .unwrap_err();
        assert!(err.to_string().contains("beta"));
        // Whole step rejected: alpha untouched too.
        assert_eq!(a.data(), before_a.as_slice());
    }
}
