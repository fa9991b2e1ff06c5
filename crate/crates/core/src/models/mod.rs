//! The five classifier architectures, assembled from the nn layer set.
//!
//! Every stack ends in dense(ReLU) -> dropout -> dense -> softmax over the
//! nine object classes, with a second dropout after the feature extractor.
//! The 3D variants max-pool over the remaining time axis before flattening,
//! so their dense head matches the 2D variants' width and the per-channel
//! filter cost stays the only parameter difference between the families.

mod eval;
mod train;

pub use eval::{evaluate, ConfusionMatrix};
pub use train::{train, EpochStats, TrainOptions, TrainResult};

use crate::dataset::NUM_CLASSES;
use crate::nn::{Conv2d, Conv3d, Dense, Dropout, Flatten, Layer, Lstm, MaxPool, Network, Relu};
use crate::preprocess::SampleLayout;
use crate::seed;
use crate::{Error, Result};

pub use crate::preprocess::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    Cnn2d1,
    Cnn2d2,
    Cnn3d1,
    Cnn3d2,
    Lstm1,
}

impl Arch {
    pub const ALL: [Arch; 5] = [
        Arch::Cnn2d1,
        Arch::Cnn2d2,
        Arch::Cnn3d1,
        Arch::Cnn3d2,
        Arch::Lstm1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Cnn2d1 => "cnn2d1",
            Arch::Cnn2d2 => "cnn2d2",
            Arch::Cnn3d1 => "cnn3d1",
            Arch::Cnn3d2 => "cnn3d2",
            Arch::Lstm1 => "lstm1",
        }
    }

    pub fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown architecture `{s}`")))
    }

    pub fn layout(self) -> SampleLayout {
        match self {
            Arch::Cnn2d1 | Arch::Cnn2d2 => SampleLayout::ChannelsAsTime2D,
            Arch::Cnn3d1 | Arch::Cnn3d2 => SampleLayout::Volume3D,
            Arch::Lstm1 => SampleLayout::SequenceOfVectors,
        }
    }

    pub fn conv_layers(self) -> usize {
        match self {
            Arch::Cnn2d1 | Arch::Cnn3d1 => 1,
            Arch::Cnn2d2 | Arch::Cnn3d2 => 2,
            Arch::Lstm1 => 0,
        }
    }

    pub fn is_cnn(self) -> bool {
        self != Arch::Lstm1
    }
}

/// Architecture hyperparameters. Node counts, kernel extents, dropout rates
/// and the learning rate are search dimensions, not fixed constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch: Arch,
    /// Filter count per conv layer (CNN archs only).
    pub conv_nodes: Vec<usize>,
    /// Spatial kernel extent (kh, kw).
    pub kernel_space: (usize, usize),
    /// Temporal kernel extent (3D archs only).
    pub kernel_time: usize,
    pub lstm_nodes: usize,
    pub dense_nodes: usize,
    /// Dropout after the feature extractor (LSTM input dropout for Lstm1).
    pub dropout_layer: f64,
    /// Dropout after the dense ReLU layer.
    pub dropout_dense: f64,
    pub lstm_recurrent_dropout: f64,
    pub learning_rate: f64,
    /// 2x2 spatial max-pool after each conv layer.
    pub pool: bool,
}

impl ModelSpec {
    pub fn defaults(arch: Arch) -> Self {
        let conv_nodes = match arch.conv_layers() {
            1 => vec![8],
            2 => vec![8, 16],
            _ => Vec::new(),
        };
        ModelSpec {
            arch,
            conv_nodes,
            kernel_space: (2, 2),
            kernel_time: 3,
            lstm_nodes: 32,
            dense_nodes: 32,
            dropout_layer: 0.1,
            dropout_dense: 0.25,
            lstm_recurrent_dropout: 0.1,
            // The recurrent net tolerates (and wants) a hotter step size.
            learning_rate: if arch == Arch::Lstm1 { 0.003 } else { 0.002 },
            // Pooling keeps the dense head of the 2-layer variants narrow.
            pool: arch.conv_layers() == 2,
        }
    }

    /// Stable fingerprint over every field; identical specs always train
    /// with identical derived seeds.
    pub fn fingerprint(&self) -> u64 {
        let mut parts: Vec<u64> = vec![
            self.arch as u64,
            self.kernel_space.0 as u64,
            self.kernel_space.1 as u64,
            self.kernel_time as u64,
            self.lstm_nodes as u64,
            self.dense_nodes as u64,
            self.dropout_layer.to_bits(),
            self.dropout_dense.to_bits(),
            self.lstm_recurrent_dropout.to_bits(),
            self.learning_rate.to_bits(),
            self.pool as u64,
        ];
        parts.extend(self.conv_nodes.iter().map(|n| *n as u64));
        seed::derive(0x5eed, &parts)
    }

    fn validate(&self, input_shape: &[usize]) -> Result<()> {
        let depth = self.arch.conv_layers();
        if self.arch.is_cnn() {
            if self.conv_nodes.len() != depth {
                return Err(Error::invalid(format!(
                    "{} needs {depth} conv filter counts, got {:?}",
                    self.arch.as_str(),
                    self.conv_nodes
                )));
            }
            if self.conv_nodes.iter().any(|&f| f == 0) {
                return Err(Error::invalid("conv filter counts must be positive"));
            }
            if self.kernel_space.0 == 0 || self.kernel_space.1 == 0 {
                return Err(Error::invalid("spatial kernel extents must be positive"));
            }
            if self.dense_nodes == 0 {
                return Err(Error::invalid("dense node count must be positive"));
            }
        }
        match (self.arch.layout(), input_shape.len()) {
            (SampleLayout::ChannelsAsTime2D, 3)
            | (SampleLayout::Volume3D, 4)
            | (SampleLayout::SequenceOfVectors, 2) => {}
            (layout, _) => {
                return Err(Error::invalid(format!(
                    "input shape {input_shape:?} does not fit layout {}",
                    layout.as_str()
                )))
            }
        }
        if self.arch == Arch::Lstm1 && (self.lstm_nodes == 0 || self.dense_nodes == 0) {
            return Err(Error::invalid("lstm/dense node counts must be positive"));
        }
        if self.arch.layout() == SampleLayout::Volume3D && self.kernel_time == 0 {
            return Err(Error::invalid("kernel_time must be positive"));
        }
        Ok(())
    }
}

/// Builds the network for `spec` with seeded weight initialisation.
/// Kernel extents are validated against the concrete input shape, so an
/// unbuildable configuration is rejected here rather than mid-training.
pub fn build(spec: &ModelSpec, input_shape: &[usize], seed_value: u64) -> Result<Network> {
    spec.validate(input_shape)?;
    let mut rng = seed::rng(seed_value, &[seed::stream::INIT]);
    let mut net = Network::new(NUM_CLASSES);
    let mut shape = input_shape.to_vec();
    let (kh, kw) = spec.kernel_space;

    // Pushes a layer and tracks the running output shape.
    let push = |net: &mut Network, shape: &mut Vec<usize>, layer: Box<dyn Layer>| {
        let next = layer.output_shape(shape)?;
        net.push(layer);
        *shape = next;
        Ok::<(), Error>(())
    };

    match spec.arch {
        Arch::Cnn2d1 | Arch::Cnn2d2 => {
            let mut in_ch = shape[0];
            for &filters in &spec.conv_nodes {
                push(&mut net, &mut shape, Box::new(Conv2d::new(in_ch, filters, kh, kw, (0, 0), &mut rng)?))?;
                push(&mut net, &mut shape, Box::new(Relu::new()))?;
                if spec.pool {
                    push(&mut net, &mut shape, Box::new(MaxPool::spatial_2x2()))?;
                }
                in_ch = filters;
            }
        }
        Arch::Cnn3d1 | Arch::Cnn3d2 => {
            let mut in_ch = shape[0];
            for &filters in &spec.conv_nodes {
                push(
                    &mut net,
                    &mut shape,
                    Box::new(Conv3d::new(in_ch, filters, spec.kernel_time, kh, kw, &mut rng)?),
                )?;
                push(&mut net, &mut shape, Box::new(Relu::new()))?;
                if spec.pool {
                    push(&mut net, &mut shape, Box::new(MaxPool::spatial_2x2()))?;
                }
                in_ch = filters;
            }
            // Collapse the remaining time axis so the dense head sees one
            // feature map per filter.
            let t_left = shape[1];
            push(&mut net, &mut shape, Box::new(MaxPool::over_time(t_left)?))?;
        }
        Arch::Lstm1 => {
            let step_dim = shape[1];
            push(
                &mut net,
                &mut shape,
                Box::new(Lstm::new(
                    step_dim,
                    spec.lstm_nodes,
                    spec.dropout_layer,
                    spec.lstm_recurrent_dropout,
                    &mut rng,
                )?),
            )?;
        }
    }

    if spec.arch.is_cnn() {
        push(&mut net, &mut shape, Box::new(Dropout::new(spec.dropout_layer)?))?;
        push(&mut net, &mut shape, Box::new(Flatten::new()))?;
    }
    let feature_dim = shape[0];
    push(&mut net, &mut shape, Box::new(Dense::new(feature_dim, spec.dense_nodes, &mut rng)?))?;
    push(&mut net, &mut shape, Box::new(Relu::new()))?;
    push(&mut net, &mut shape, Box::new(Dropout::new(spec.dropout_dense)?))?;
    push(&mut net, &mut shape, Box::new(Dense::new(spec.dense_nodes, NUM_CLASSES, &mut rng)?))?;

    net.output_shape(input_shape)?;
    Ok(net)
}

/// Exact trainable-parameter total for a buildable spec.
pub fn parameter_count(spec: &ModelSpec, input_shape: &[usize]) -> Result<usize> {
    Ok(build(spec, input_shape, 0)?.param_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use crate::nn::Tensor;
    use rand::Rng;

    #[test]
    fn dense_layer_parameter_arithmetic() {
        // A bare 10 -> 9 dense layer costs 10*9 + 9 = 99 parameters.
        let mut rng = seed::rng(0, &[seed::stream::INIT]);
        let d = Dense::new(10, 9, &mut rng).unwrap();
        let total: usize = d.params().iter().map(|p| p.len()).sum();
        assert_eq!(total, 99);
    }

    #[test]
    fn lstm_shape_propagation_for_wts_input() {
        let mut spec = ModelSpec::defaults(Arch::Lstm1);
        spec.lstm_nodes = 64;
        // The LSTM consumes 63 vectors of length 96 and hands one 64-vector
        // to the dense head.
        let mut net = build(&spec, &[63, 96], 0).unwrap();
        let mut probe = seed::rng(9, &[0]);
        let data: Vec<f64> = (0..63 * 96).map(|_| probe.gen_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(&[63, 96], data).unwrap();
        let logits = net.forward(&x, Mode::Infer, 0).unwrap();
        assert_eq!(logits.shape(), &[9]);
        let lstm_params: usize = 4 * 64 * 96 + 4 * 64 * 64 + 4 * 64;
        assert!(net.param_count() > lstm_params);
    }

    #[test]
    fn split_ratio_seven_sets_nine_input_channels() {
        let spec = ModelSpec::defaults(Arch::Cnn2d1);
        // T = ceil(63/7) = 9 input channels for the 2D arch.
        let net = build(&spec, &[9, 24, 4], 0).unwrap();
        assert_eq!(net.output_shape(&[9, 24, 4]).unwrap(), vec![9]);
    }

    #[test]
    fn kernel_time_spanning_input_collapses_time() {
        let mut spec = ModelSpec::defaults(Arch::Cnn3d1);
        spec.kernel_time = 63;
        let net = build(&spec, &[1, 63, 24, 4], 0).unwrap();
        assert_eq!(net.output_shape(&[1, 63, 24, 4]).unwrap(), vec![9]);
    }

    #[test]
    fn oversized_kernel_rejected_at_build_time() {
        let mut spec = ModelSpec::defaults(Arch::Cnn2d1);
        spec.kernel_space = (25, 2);
        assert!(build(&spec, &[63, 24, 4], 0).is_err());
        let mut spec = ModelSpec::defaults(Arch::Cnn3d1);
        spec.kernel_time = 64;
        assert!(build(&spec, &[1, 63, 24, 4], 0).is_err());
    }

    #[test]
    fn zero_filter_spec_rejected() {
        let mut spec = ModelSpec::defaults(Arch::Cnn2d1);
        spec.conv_nodes = vec![0];
        assert!(parameter_count(&spec, &[63, 24, 4]).is_err());
    }

    /// Matched 1-layer configs: the 2D family pays for one filter set per
    /// input channel, the 3D family for a single kt-deep set, while the
    /// time-pooled head keeps the dense widths identical. Closed form:
    /// 2D - 3D = F * kh * kw * (T - kt).
    #[test]
    fn parameter_count_gap_matches_closed_form() {
        for (t, kt, filters) in [(63usize, 2usize, 8usize), (21, 5, 4), (13, 2, 16)] {
            let mut spec2 = ModelSpec::defaults(Arch::Cnn2d1);
            spec2.conv_nodes = vec![filters];
            let mut spec3 = ModelSpec::defaults(Arch::Cnn3d1);
            spec3.conv_nodes = vec![filters];
            spec3.kernel_time = kt;
            let n2 = parameter_count(&spec2, &[t, 24, 4]).unwrap();
            let n3 = parameter_count(&spec3, &[1, t, 24, 4]).unwrap();
            assert!(n2 > n3, "t={t} kt={kt}");
            let (kh, kw) = spec2.kernel_space;
            assert_eq!(n2 - n3, filters * kh * kw * (t - kt));
        }
    }

    #[test]
    fn forward_probabilities_sum_to_one_across_archs() {
        for arch in Arch::ALL {
            for t in [63usize, 21, 13, 9] {
                let spec = ModelSpec::defaults(arch);
                let shape: Vec<usize> = match arch.layout() {
                    SampleLayout::ChannelsAsTime2D => vec![t, 24, 4],
                    SampleLayout::Volume3D => vec![1, t, 24, 4],
                    SampleLayout::SequenceOfVectors => vec![t, 96],
                };
                let mut net = build(&spec, &shape, 1).unwrap();
                let mut rng = seed::rng(2, &[t as u64]);
                let data: Vec<f64> = (0..shape.iter().product::<usize>())
                    .map(|_| rng.gen_range(0.0..1.0))
                    .collect();
                let x = Tensor::from_vec(&shape, data).unwrap();
                let probs = net.predict_probs(&x).unwrap();
                assert_eq!(probs.len(), 9);
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
