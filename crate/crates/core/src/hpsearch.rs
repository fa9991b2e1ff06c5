//! Deterministic hyperparameter search over the searched dimensions:
//! learning rate, layer/dense node counts, dropout rates and kernel
//! extents. Plain grid enumeration or seeded random sampling; every trial
//! is a full train + evaluate run judged by validation accuracy.
//!
//! Per-trial seeds derive from the trial's configuration fingerprint, so
//! identical configurations always reproduce identical results, and trials
//! may run concurrently without changing any number.

use rand::Rng;
use rayon::prelude::*;

use crate::models::{build, parameter_count, train, Arch, ModelSpec, Sample, TrainOptions};
use crate::seed;
use crate::{Error, Result};

/// Value grids per searched dimension. Dimensions an architecture does not
/// use (e.g. kernel_time for a 2D net) are pinned to their first entry.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub learning_rates: Vec<f64>,
    /// Conv filter count of the first layer (second layer doubles it), or
    /// LSTM node count.
    pub layer_nodes: Vec<usize>,
    pub dense_nodes: Vec<usize>,
    pub dropout_layer: Vec<f64>,
    pub dropout_dense: Vec<f64>,
    pub recurrent_dropout: Vec<f64>,
    /// Square spatial kernel extents.
    pub kernel_space: Vec<usize>,
    pub kernel_time: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            learning_rates: vec![0.002, 0.005],
            layer_nodes: vec![8, 16],
            dense_nodes: vec![32],
            dropout_layer: vec![0.1],
            dropout_dense: vec![0.25],
            recurrent_dropout: vec![0.1],
            kernel_space: vec![2, 3],
            kernel_time: vec![2, 5],
        }
    }
}

impl SearchSpace {
    fn validate(&self, arch: Arch) -> Result<()> {
        let mut dims: Vec<(&str, usize)> = vec![
            ("learning_rate", self.learning_rates.len()),
            ("layer_nodes", self.layer_nodes.len()),
            ("dense_nodes", self.dense_nodes.len()),
            ("dropout_layer", self.dropout_layer.len()),
            ("dropout_dense", self.dropout_dense.len()),
        ];
        if arch == Arch::Lstm1 {
            dims.push(("recurrent_dropout", self.recurrent_dropout.len()));
        } else {
            dims.push(("kernel_space", self.kernel_space.len()));
        }
        if matches!(arch, Arch::Cnn3d1 | Arch::Cnn3d2) {
            dims.push(("kernel_time", self.kernel_time.len()));
        }
        for (name, len) in dims {
            if len == 0 {
                return Err(Error::invalid(format!("empty search grid for {name}")));
            }
        }
        Ok(())
    }

    /// Cartesian product size over the dimensions `arch` uses.
    pub fn grid_size(&self, arch: Arch) -> usize {
        let mut n = self.learning_rates.len()
            * self.layer_nodes.len()
            * self.dense_nodes.len()
            * self.dropout_layer.len()
            * self.dropout_dense.len();
        if arch == Arch::Lstm1 {
            n *= self.recurrent_dropout.len();
        } else {
            n *= self.kernel_space.len();
        }
        if matches!(arch, Arch::Cnn3d1 | Arch::Cnn3d2) {
            n *= self.kernel_time.len();
        }
        n
    }

    fn spec_from_indices(&self, arch: Arch, idx: &[usize]) -> ModelSpec {
        let mut spec = ModelSpec::defaults(arch);
        spec.learning_rate = self.learning_rates[idx[0]];
        let nodes = self.layer_nodes[idx[1]];
        if arch.is_cnn() {
            spec.conv_nodes = match arch.conv_layers() {
                1 => vec![nodes],
                _ => vec![nodes, nodes * 2],
            };
        } else {
            spec.lstm_nodes = nodes;
        }
        spec.dense_nodes = self.dense_nodes[idx[2]];
        spec.dropout_layer = self.dropout_layer[idx[3]];
        spec.dropout_dense = self.dropout_dense[idx[4]];
        if arch == Arch::Lstm1 {
            spec.lstm_recurrent_dropout = self.recurrent_dropout[idx[5]];
        } else {
            let k = self.kernel_space[idx[5]];
            spec.kernel_space = (k, k);
        }
        if matches!(arch, Arch::Cnn3d1 | Arch::Cnn3d2) {
            spec.kernel_time = self.kernel_time[idx[6]];
        }
        spec
    }

    /// All grid points in deterministic nested order.
    fn enumerate(&self, arch: Arch) -> Vec<ModelSpec> {
        let dim6 = if arch == Arch::Lstm1 {
            self.recurrent_dropout.len()
        } else {
            self.kernel_space.len()
        };
        let dim7 = if matches!(arch, Arch::Cnn3d1 | Arch::Cnn3d2) {
            self.kernel_time.len()
        } else {
            1
        };
        let mut out = Vec::with_capacity(self.grid_size(arch));
        for i0 in 0..self.learning_rates.len() {
            for i1 in 0..self.layer_nodes.len() {
                for i2 in 0..self.dense_nodes.len() {
                    for i3 in 0..self.dropout_layer.len() {
                        for i4 in 0..self.dropout_dense.len() {
                            for i5 in 0..dim6 {
                                for i6 in 0..dim7 {
                                    out.push(self.spec_from_indices(
                                        arch,
                                        &[i0, i1, i2, i3, i4, i5, i6],
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `budget` seeded draws, sampling each dimension uniformly.
    fn sample(&self, arch: Arch, budget: usize, seed_value: u64) -> Vec<ModelSpec> {
        let mut rng = seed::rng(seed_value, &[seed::stream::SEARCH]);
        (0..budget)
            .map(|_| {
                let idx = [
                    rng.gen_range(0..self.learning_rates.len()),
                    rng.gen_range(0..self.layer_nodes.len()),
                    rng.gen_range(0..self.dense_nodes.len()),
                    rng.gen_range(0..self.dropout_layer.len()),
                    rng.gen_range(0..self.dropout_dense.len()),
                    if arch == Arch::Lstm1 {
                        rng.gen_range(0..self.recurrent_dropout.len())
                    } else {
                        rng.gen_range(0..self.kernel_space.len())
                    },
                    if matches!(arch, Arch::Cnn3d1 | Arch::Cnn3d2) {
                        rng.gen_range(0..self.kernel_time.len())
                    } else {
                        0
                    },
                ];
                self.spec_from_indices(arch, &idx)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Grid,
    Random,
}

impl SearchMode {
    pub fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(SearchMode::Grid),
            "random" => Ok(SearchMode::Random),
            other => Err(Error::invalid(format!("unknown search mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct Trial {
    /// Enumeration index of the trial within the search.
    pub index: usize,
    pub spec: ModelSpec,
    pub val_acc: f64,
    pub param_count: usize,
    pub status: TrialStatus,
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub mode: SearchMode,
    pub budget: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Worker threads; 0 uses the rayon default pool.
    pub workers: usize,
}

/// Runs the search and returns trials ranked best-first: by validation
/// accuracy, ties broken by fewer parameters, then lower trial index.
/// Failed trials (unbuildable config or non-finite loss) sort last and
/// keep their failure reason.
pub fn search(
    space: &SearchSpace,
    arch: Arch,
    train_samples: &[Sample],
    val_samples: &[Sample],
    opts: &SearchOptions,
) -> Result<Vec<Trial>> {
    if opts.budget == 0 {
        return Err(Error::invalid("search budget must be >= 1"));
    }
    space.validate(arch)?;
    if train_samples.is_empty() || val_samples.is_empty() {
        return Err(Error::invalid("search needs non-empty train and val sets"));
    }
    let mut specs = match opts.mode {
        SearchMode::Grid => space.enumerate(arch),
        SearchMode::Random => space.sample(arch, opts.budget, opts.seed),
    };
    specs.truncate(opts.budget);

    let input_shape = train_samples[0].tensor.shape().to_vec();
    let run_all = |specs: Vec<ModelSpec>| {
        specs
            .into_par_iter()
            .enumerate()
            .map(|(index, spec)| {
                run_trial(index, spec, &input_shape, train_samples, val_samples, opts)
            })
            .collect::<Vec<Trial>>()
    };
    let mut trials: Vec<Trial> = if opts.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?
            .install(|| run_all(specs))
    } else {
        run_all(specs)
    };

    trials.sort_by(|a, b| {
        let ok_a = matches!(a.status, TrialStatus::Ok);
        let ok_b = matches!(b.status, TrialStatus::Ok);
        ok_b.cmp(&ok_a)
            .then(b.val_acc.total_cmp(&a.val_acc))
            .then(a.param_count.cmp(&b.param_count))
            .then(a.index.cmp(&b.index))
    });
    Ok(trials)
}

fn run_trial(
    index: usize,
    spec: ModelSpec,
    input_shape: &[usize],
    train_samples: &[Sample],
    val_samples: &[Sample],
    opts: &SearchOptions,
) -> Trial {
    let trial_seed = seed::derive(opts.seed, &[seed::stream::SEARCH, spec.fingerprint()]);
    let attempt = || -> Result<(f64, usize)> {
        let params = parameter_count(&spec, input_shape)?;
        let mut net = build(&spec, input_shape, trial_seed)?;
        let mut topts = TrainOptions::new(
            spec.arch.layout(),
            spec.learning_rate,
            opts.epochs,
            trial_seed,
        );
        topts.batch_size = opts.batch_size;
        let result = train(&mut net, train_samples, val_samples, &topts)?;
        Ok((result.best_val_acc.unwrap_or(0.0), params))
    };
    match attempt() {
        Ok((val_acc, param_count)) => Trial {
            index,
            spec,
            val_acc,
            param_count,
            status: TrialStatus::Ok,
        },
        Err(e) => Trial {
            index,
            spec,
            val_acc: f64::NAN,
            param_count: 0,
            status: TrialStatus::Failed(e.to_string()),
        },
    }
}

fn fmt_spec_nodes(spec: &ModelSpec) -> String {
    if spec.arch.is_cnn() {
        spec.conv_nodes
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(";")
    } else {
        spec.lstm_nodes.to_string()
    }
}

/// TSV report: trial_id, config fields, val_acc, param_count, status.
pub fn report_tsv(trials: &[Trial]) -> String {
    let mut out = String::from(
        "trial_id\tarch\tlearning_rate\tnodes\tdense_nodes\tdropout_layer\tdropout_dense\t\
         recurrent_dropout\tkernel_space\tkernel_time\tval_acc\tparam_count\tstatus\n",
    );
    for t in trials {
        let status = match &t.status {
            TrialStatus::Ok => "ok".to_string(),
            TrialStatus::Failed(reason) => format!("failed: {reason}"),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}x{}\t{}\t{}\t{}\t{}\n",
            t.index,
            t.spec.arch.as_str(),
            t.spec.learning_rate,
            fmt_spec_nodes(&t.spec),
            t.spec.dense_nodes,
            t.spec.dropout_layer,
            t.spec.dropout_dense,
            t.spec.lstm_recurrent_dropout,
            t.spec.kernel_space.0,
            t.spec.kernel_space.1,
            t.spec.kernel_time,
            t.val_acc,
            t.param_count,
            status
        ));
    }
    out
}

/// Pivot table over (kernel_time, kernel_space) for 3D searches: best
/// validation accuracy per combination.
pub fn kernel_grid_tsv(trials: &[Trial]) -> String {
    use std::collections::BTreeMap;
    let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for t in trials {
        if !matches!(t.status, TrialStatus::Ok) {
            continue;
        }
        let key = (t.spec.kernel_time, t.spec.kernel_space.0);
        let entry = best.entry(key).or_insert(f64::NEG_INFINITY);
        if t.val_acc > *entry {
            *entry = t.val_acc;
        }
    }
    let mut out = String::from("kernel_time\tkernel_space\tbest_val_acc\n");
    for ((kt, ks), acc) in best {
        out.push_str(&format!("{kt}\t{ks}\t{acc}\n"));
    }
    out
}
