//! Finite-difference gradient checks for every layer kind.
//!
//! Each layer is wrapped in the smooth probe loss L(y) = 0.5 * sum(y^2), so
//! dL/dy = y. Analytic gradients from `backward` must match central finite
//! differences (h = 1e-5) within a relative error of 1e-4 on at least 20
//! random instances per layer kind. Random draws avoid the ReLU kink and
//! make max-pool ties measure-zero; seeds are fixed, so a green run stays
//! green.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use taxelgrasp_core::nn::{
    softmax_cross_entropy, Conv2d, Conv3d, Dense, Dropout, Flatten, Layer, Lstm, MaxPool, Mode,
    Relu, Tensor,
};
use taxelgrasp_core::seed;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const INSTANCES: usize = 20;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn probe_loss(y: &Tensor) -> f64 {
    0.5 * y.data().iter().map(|v| v * v).sum::<f64>()
}

/// Random values bounded away from zero (keeps ReLU inputs off the kink).
fn gen_data(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag: f64 = rng.gen_range(0.05..1.5);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            mag * sign
        })
        .collect()
}

fn gen_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_vec(shape, gen_data(rng, shape.iter().product())).unwrap()
}

/// Checks d(probe_loss)/d(params and input) for one layer instance.
fn check_layer(layer: &mut dyn Layer, input: &Tensor, fwd_seed: u64, label: &str) {
    let y = layer.forward(input, Mode::Train, fwd_seed).unwrap();
    let grad_out = y.detached();
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let analytic_input_grad = layer.backward(&grad_out).unwrap();
    let analytic_param_grads: Vec<Vec<f64>> = layer
        .params()
        .iter()
        .map(|p| p.grad().unwrap_or(&[]).to_vec())
        .collect();

    // Parameters.
    let n_params = layer.params().len();
    for pi in 0..n_params {
        let len = layer.params()[pi].len();
        for j in 0..len {
            let orig = layer.params()[pi].data()[j];
            layer.params_mut()[pi].data_mut()[j] = orig + H;
            let lp = probe_loss(&layer.forward(input, Mode::Train, fwd_seed).unwrap());
            layer.params_mut()[pi].data_mut()[j] = orig - H;
            let lm = probe_loss(&layer.forward(input, Mode::Train, fwd_seed).unwrap());
            layer.params_mut()[pi].data_mut()[j] = orig;
            let numeric = (lp - lm) / (2.0 * H);
            let analytic = analytic_param_grads[pi][j];
            assert!(
                rel_err(analytic, numeric) < TOL,
                "{label}: param {pi}[{j}] analytic={analytic} numeric={numeric}"
            );
        }
    }

    // Input.
    let mut x = input.detached();
    for j in 0..x.len() {
        let orig = x.data()[j];
        x.data_mut()[j] = orig + H;
        let lp = probe_loss(&layer.forward(&x, Mode::Train, fwd_seed).unwrap());
        x.data_mut()[j] = orig - H;
        let lm = probe_loss(&layer.forward(&x, Mode::Train, fwd_seed).unwrap());
        x.data_mut()[j] = orig;
        let numeric = (lp - lm) / (2.0 * H);
        let analytic = analytic_input_grad.data()[j];
        assert!(
            rel_err(analytic, numeric) < TOL,
            "{label}: input[{j}] analytic={analytic} numeric={numeric}"
        );
    }
}

#[test]
fn conv2d_gradients_match_finite_differences() {
    let start = Instant::now();
    for i in 0..INSTANCES {
        let mut rng = seed::rng(100, &[i as u64]);
        let (cin, cout) = (rng.gen_range(1..3usize), rng.gen_range(1..4usize));
        let (kh, kw) = (rng.gen_range(1..3usize), rng.gen_range(1..3usize));
        let (h, w) = (rng.gen_range(3..6usize), rng.gen_range(3..6usize));
        let pad = if i % 4 == 0 { (1, 1) } else { (0, 0) };
        let mut layer = Conv2d::new(cin, cout, kh, kw, pad, &mut rng).unwrap();
        let input = gen_tensor(&mut rng, &[cin, h, w]);
        check_layer(&mut layer, &input, 7, "conv2d");
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn conv3d_gradients_match_finite_differences() {
    for i in 0..INSTANCES {
        let mut rng = seed::rng(200, &[i as u64]);
        let (cin, cout) = (rng.gen_range(1..3usize), rng.gen_range(1..3usize));
        let kt = rng.gen_range(1..3usize);
        let (kh, kw) = (rng.gen_range(1..3usize), rng.gen_range(1..3usize));
        let (t, h, w) = (
            rng.gen_range(2..5usize),
            rng.gen_range(2..5usize),
            rng.gen_range(2..5usize),
        );
        let mut layer = Conv3d::new(cin, cout, kt.min(t), kh.min(h), kw.min(w), &mut rng).unwrap();
        let input = gen_tensor(&mut rng, &[cin, t, h, w]);
        check_layer(&mut layer, &input, 7, "conv3d");
    }
}

#[test]
fn dense_gradients_match_finite_differences() {
    for i in 0..INSTANCES {
        let mut rng = seed::rng(300, &[i as u64]);
        let (din, dout) = (rng.gen_range(1..8usize), rng.gen_range(1..8usize));
        let mut layer = Dense::new(din, dout, &mut rng).unwrap();
        let input = gen_tensor(&mut rng, &[din]);
        check_layer(&mut layer, &input, 7, "dense");
    }
}

#[test]
fn relu_and_flatten_gradients_match_finite_differences() {
    for i in 0..INSTANCES {
        let mut rng = seed::rng(400, &[i as u64]);
        let shape = [rng.gen_range(1..3usize), rng.gen_range(2..5usize), rng.gen_range(2..5usize)];
        let input = gen_tensor(&mut rng, &shape);
        check_layer(&mut Relu::new(), &input, 7, "relu");
        check_layer(&mut Flatten::new(), &input, 7, "flatten");
    }
}

#[test]
fn maxpool_gradients_match_finite_differences() {
    for i in 0..INSTANCES {
        let mut rng = seed::rng(500, &[i as u64]);
        if i % 2 == 0 {
            let shape = [rng.gen_range(1..3usize), rng.gen_range(3..6usize), rng.gen_range(3..6usize)];
            let input = gen_tensor(&mut rng, &shape);
            check_layer(&mut MaxPool::spatial_2x2(), &input, 7, "maxpool2x2");
        } else {
            let t = rng.gen_range(2..5usize);
            let shape = [rng.gen_range(1..3usize), t, rng.gen_range(2..4usize), rng.gen_range(2..4usize)];
            let input = gen_tensor(&mut rng, &shape);
            check_layer(&mut MaxPool::over_time(t).unwrap(), &input, 7, "maxpool-time");
        }
    }
}

#[test]
fn dropout_gradients_match_finite_differences() {
    for i in 0..INSTANCES {
        let mut rng = seed::rng(600, &[i as u64]);
        let rate = [0.0, 0.2, 0.5][i % 3];
        let len = rng.gen_range(4..12usize);
        let input = gen_tensor(&mut rng, &[len]);
        // The mask is a deterministic function of the forward seed, so the
        // finite-difference probes see the same mask as the analytic pass.
        check_layer(&mut Dropout::new(rate).unwrap(), &input, 40 + i as u64, "dropout");
    }
}

#[test]
fn lstm_gradients_match_finite_differences() {
    for i in 0..INSTANCES {
        let mut rng = seed::rng(700, &[i as u64]);
        let (din, nodes) = (rng.gen_range(2..5usize), rng.gen_range(2..5usize));
        let steps = rng.gen_range(1..4usize);
        let (drop, rec_drop) = if i % 3 == 0 { (0.25, 0.25) } else { (0.0, 0.0) };
        let mut layer = Lstm::new(din, nodes, drop, rec_drop, &mut rng).unwrap();
        let input = gen_tensor(&mut rng, &[steps, din]);
        check_layer(&mut layer, &input, 90 + i as u64, "lstm");
    }
}

#[test]
fn softmax_xent_gradient_matches_finite_differences() {
    for i in 0..INSTANCES {
        let mut rng = seed::rng(800, &[i as u64]);
        let k = rng.gen_range(2..9usize);
        let logits = gen_data(&mut rng, k);
        let label = rng.gen_range(0..k);
        let (_, probs) = softmax_cross_entropy(&logits, label).unwrap();
        for j in 0..k {
            let analytic = probs[j] - if j == label { 1.0 } else { 0.0 };
            let mut lp = logits.clone();
            lp[j] += H;
            let mut lm = logits.clone();
            lm[j] -= H;
            let numeric = (softmax_cross_entropy(&lp, label).unwrap().0
                - softmax_cross_entropy(&lm, label).unwrap().0)
                / (2.0 * H);
            assert!(
                rel_err(analytic, numeric) < TOL,
                "softmax: logit[{j}] analytic={analytic} numeric={numeric}"
            );
        }
    }
}

/// Composite stack: gradients stay correct through layer composition.
#[test]
fn full_network_gradients_match_finite_differences() {
    use taxelgrasp_core::models::{build, Arch, ModelSpec};
    use taxelgrasp_core::nn::Network;

    let spec = ModelSpec {
        conv_nodes: vec![2],
        dense_nodes: 5,
        dropout_layer: 0.2,
        dropout_dense: 0.2,
        ..ModelSpec::defaults(Arch::Cnn2d1)
    };
    let shape = [3usize, 5, 4];
    let mut net = build(&spec, &shape, 42).unwrap();
    let mut rng = seed::rng(900, &[1]);
    let input = gen_tensor(&mut rng, &shape);
    let label = 4;
    let fwd_seed = 77;

    let loss_of = |net: &mut Network, x: &Tensor| {
        net.forward_loss(x, label, Mode::Train, fwd_seed).unwrap().0
    };

    net.zero_grads();
    net.forward_loss(&input, label, Mode::Train, fwd_seed).unwrap();
    net.backward().unwrap();
    let analytic: Vec<(String, Vec<f64>)> = net
        .named_params()
        .iter()
        .map(|(n, p)| (n.clone(), p.grad().unwrap().to_vec()))
        .collect();

    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for j in 0..grads.len() {
            let orig = net.named_params_mut()[pi].1.data()[j];
            net.named_params_mut()[pi].1.data_mut()[j] = orig + H;
            let lp = loss_of(&mut net, &input);
            net.named_params_mut()[pi].1.data_mut()[j] = orig - H;
            let lm = loss_of(&mut net, &input);
            net.named_params_mut()[pi].1.data_mut()[j] = orig;
            let numeric = (lp - lm) / (2.0 * H);
            assert!(
                rel_err(grads[j], numeric) < TOL,
                "{name}[{j}]: analytic={} numeric={numeric}",
                grads[j]
            );
        }
    }
}
