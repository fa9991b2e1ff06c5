//! Independent oracles for the numeric kernels, written as plain direct
//! summations and scalar recurrences that share no code with the layer
//! implementations. Agreement tolerance is 1e-10 absolute.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use taxelgrasp_core::nn::{
    softmax_cross_entropy, Conv2d, Conv3d, Layer, Lstm, Mode, RmsProp, Tensor,
};
use taxelgrasp_core::seed;

const TOL: f64 = 1e-10;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Quadruple-loop valid convolution, indexing scalars one at a time.
#[allow(clippy::needless_range_loop)]
fn conv2d_reference(
    x: &[f64],
    (cin, h, w): (usize, usize, usize),
    k: &[f64],
    (cout, kh, kw): (usize, usize, usize),
    bias: &[f64],
) -> Vec<f64> {
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; cout * ho * wo];
    for f in 0..cout {
        for oh in 0..ho {
            for ow in 0..wo {
                let mut acc = bias[f];
                for c in 0..cin {
                    for i in 0..kh {
                        for j in 0..kw {
                            let xv = x[c * h * w + (oh + i) * w + (ow + j)];
                            let kv = k[f * cin * kh * kw + c * kh * kw + i * kw + j];
                            acc += xv * kv;
                        }
                    }
                }
                out[f * ho * wo + oh * wo + ow] = acc;
            }
        }
    }
    out
}

#[allow(clippy::needless_range_loop, clippy::too_many_arguments)]
fn conv3d_reference(
    x: &[f64],
    (cin, t, h, w): (usize, usize, usize, usize),
    k: &[f64],
    (cout, kt, kh, kw): (usize, usize, usize, usize),
    bias: &[f64],
) -> Vec<f64> {
    let (to, ho, wo) = (t - kt + 1, h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; cout * to * ho * wo];
    for f in 0..cout {
        for ot in 0..to {
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = bias[f];
                    for c in 0..cin {
                        for dt in 0..kt {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let xv = x[c * t * h * w
                                        + (ot + dt) * h * w
                                        + (oh + i) * w
                                        + (ow + j)];
                                    let kv = k[f * cin * kt * kh * kw
                                        + c * kt * kh * kw
                                        + dt * kh * kw
                                        + i * kw
                                        + j];
                                    acc += xv * kv;
                                }
                            }
                        }
                    }
                    out[f * to * ho * wo + ot * ho * wo + oh * wo + ow] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_direct_summation_oracle() {
    // The spec's pinned instance first: 2x5x5 input, 3x2x2x2 kernel.
    let mut rng = seed::rng(1000, &[0]);
    let mut cases = vec![(2usize, 5usize, 5usize, 3usize, 2usize, 2usize)];
    for _ in 0..12 {
        cases.push((
            rng.gen_range(1..4),
            rng.gen_range(2..9),
            rng.gen_range(2..9),
            rng.gen_range(1..4),
            rng.gen_range(1..3),
            rng.gen_range(1..3),
        ));
    }
    for (cin, h, w, cout, kh, kw) in cases {
        let x = rand_vec(&mut rng, cin * h * w);
        let k = rand_vec(&mut rng, cout * cin * kh * kw);
        let b = rand_vec(&mut rng, cout);
        let mut layer = Conv2d::from_weights(
            Tensor::from_vec(&[cout, cin, kh, kw], k.clone()).unwrap(),
            Tensor::from_vec(&[cout], b.clone()).unwrap(),
            (0, 0),
        )
        .unwrap();
        let y = layer
            .forward(&Tensor::from_vec(&[cin, h, w], x.clone()).unwrap(), Mode::Infer, 0)
            .unwrap();
        let expect = conv2d_reference(&x, (cin, h, w), &k, (cout, kh, kw), &b);
        for (a, e) in y.data().iter().zip(&expect) {
            assert!((a - e).abs() < TOL, "conv2d {a} vs {e}");
        }
    }
}

#[test]
fn conv3d_matches_direct_summation_oracle() {
    // Pinned instance: 1x4x6x4 input, 2x1x2x2x2 kernel.
    let mut rng = seed::rng(1001, &[0]);
    let mut cases = vec![(1usize, 4usize, 6usize, 4usize, 2usize, 2usize, 2usize, 2usize)];
    for _ in 0..10 {
        let t = rng.gen_range(2..6);
        cases.push((
            rng.gen_range(1..3),
            t,
            rng.gen_range(2..9),
            rng.gen_range(2..9),
            rng.gen_range(1..3),
            rng.gen_range(1..=t.min(3)),
            rng.gen_range(1..3),
            rng.gen_range(1..3),
        ));
    }
    for (cin, t, h, w, cout, kt, kh, kw) in cases {
        let x = rand_vec(&mut rng, cin * t * h * w);
        let k = rand_vec(&mut rng, cout * cin * kt * kh * kw);
        let b = rand_vec(&mut rng, cout);
        let mut layer = Conv3d::from_weights(
            Tensor::from_vec(&[cout, cin, kt, kh, kw], k.clone()).unwrap(),
            Tensor::from_vec(&[cout], b.clone()).unwrap(),
        )
        .unwrap();
        let y = layer
            .forward(
                &Tensor::from_vec(&[cin, t, h, w], x.clone()).unwrap(),
                Mode::Infer,
                0,
            )
            .unwrap();
        let expect = conv3d_reference(&x, (cin, t, h, w), &k, (cout, kt, kh, kw), &b);
        for (a, e) in y.data().iter().zip(&expect) {
            assert!((a - e).abs() < TOL, "conv3d {a} vs {e}");
        }
    }
}

/// Scalar step-by-step LSTM cell recurrence (input, forget, output,
/// candidate gate order; zero initial state).
fn lstm_reference(
    xs: &[Vec<f64>],
    wx: &[f64],
    wh: &[f64],
    b: &[f64],
    nodes: usize,
    din: usize,
) -> Vec<f64> {
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut h = vec![0.0; nodes];
    let mut c = vec![0.0; nodes];
    for x in xs {
        let mut z = vec![0.0; 4 * nodes];
        for r in 0..4 * nodes {
            let mut acc = b[r];
            for d in 0..din {
                acc += wx[r * din + d] * x[d];
            }
            for n in 0..nodes {
                acc += wh[r * nodes + n] * h[n];
            }
            z[r] = acc;
        }
        let mut new_h = vec![0.0; nodes];
        let mut new_c = vec![0.0; nodes];
        for j in 0..nodes {
            let i_gate = sig(z[j]);
            let f_gate = sig(z[nodes + j]);
            let o_gate = sig(z[2 * nodes + j]);
            let g = z[3 * nodes + j].tanh();
            new_c[j] = f_gate * c[j] + i_gate * g;
            new_h[j] = o_gate * new_c[j].tanh();
        }
        h = new_h;
        c = new_c;
    }
    h
}

#[test]
fn lstm_matches_scalar_cell_recurrence() {
    let mut rng = seed::rng(1002, &[0]);
    for case in 0..10 {
        let din = rng.gen_range(1..5usize);
        let nodes = rng.gen_range(1..5usize);
        // Case 0 pins the single-step = single-cell identity.
        let steps = if case == 0 { 1 } else { rng.gen_range(2..5usize) };
        let wx = rand_vec(&mut rng, 4 * nodes * din);
        let wh = rand_vec(&mut rng, 4 * nodes * nodes);
        let b = rand_vec(&mut rng, 4 * nodes);
        let xs: Vec<Vec<f64>> = (0..steps).map(|_| rand_vec(&mut rng, din)).collect();

        let mut layer = Lstm::from_weights(
            Tensor::from_vec(&[4 * nodes, din], wx.clone()).unwrap(),
            Tensor::from_vec(&[4 * nodes, nodes], wh.clone()).unwrap(),
            Tensor::from_vec(&[4 * nodes], b.clone()).unwrap(),
        )
        .unwrap();
        let got = layer.run(&xs, Mode::Infer, 0).unwrap();
        let expect = lstm_reference(&xs, &wx, &wh, &b, nodes, din);
        for (a, e) in got.data().iter().zip(&expect) {
            assert!((a - e).abs() < TOL, "lstm {a} vs {e}");
        }
    }
}

#[test]
fn softmax_cross_entropy_matches_exp_sum_formula() {
    let mut rng = seed::rng(1003, &[0]);
    for _ in 0..25 {
        let k = rng.gen_range(2..10usize);
        let logits = rand_vec(&mut rng, k);
        let label = rng.gen_range(0..k);
        let (loss, probs) = softmax_cross_entropy(&logits, label).unwrap();
        let sum: f64 = logits.iter().map(|l| l.exp()).sum();
        for (p, l) in probs.iter().zip(&logits) {
            assert!((p - l.exp() / sum).abs() < TOL);
        }
        assert!((loss - (-(logits[label].exp() / sum).ln())).abs() < TOL);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rmsprop_matches_scalar_recurrence() {
    let mut rng = seed::rng(1004, &[0]);
    for _ in 0..10 {
        let n = rng.gen_range(1..6usize);
        let lr = rng.gen_range(0.001..0.05);
        let rho = rng.gen_range(0.8..0.99);
        let eps = 1e-8;
        let theta0 = rand_vec(&mut rng, n);
        let grads: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, n)).collect();

        let mut p = Tensor::from_vec(&[n], theta0.clone()).unwrap();
        let mut opt = RmsProp::new(lr, rho, eps).unwrap();
        for g in &grads {
            p.zero_grad();
            p.grad_mut().copy_from_slice(g);
            opt.step(&mut [("p".into(), &mut p)]).unwrap();
        }

        // Independent scalar recurrence.
        let mut theta = theta0;
        let mut v = vec![0.0; n];
        for g in &grads {
            for j in 0..n {
                v[j] = rho * v[j] + (1.0 - rho) * g[j] * g[j];
                theta[j] -= lr * g[j] / (v[j].sqrt() + eps);
            }
        }
        for (a, e) in p.data().iter().zip(&theta) {
            assert!((a - e).abs() < TOL, "rmsprop {a} vs {e}");
        }
    }
}

/// Determinism gate: two fresh runs of the same seeded forward/backward
/// produce bitwise-identical losses and gradients.
#[test]
fn training_step_is_bitwise_deterministic() {
    use taxelgrasp_core::models::{build, Arch, ModelSpec};
    use taxelgrasp_core::nn::Mode;

    let spec = ModelSpec {
        conv_nodes: vec![3],
        ..ModelSpec::defaults(Arch::Cnn2d1)
    };
    let shape = [4usize, 6, 4];
    let run = || {
        let mut net = build(&spec, &shape, 5).unwrap();
        let mut rng = seed::rng(1005, &[0]);
        let x = Tensor::from_vec(&shape, rand_vec(&mut rng, shape.iter().product())).unwrap();
        let (loss, _) = net.forward_loss(&x, 3, Mode::Train, 99).unwrap();
        net.backward().unwrap();
        let grads: Vec<u64> = net
            .named_params()
            .iter()
            .flat_map(|(_, p)| p.grad().unwrap().iter().map(|g| g.to_bits()))
            .collect();
        (loss.to_bits(), grads)
    };
    assert_eq!(run(), run());
}
