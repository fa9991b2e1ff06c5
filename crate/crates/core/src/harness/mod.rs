//! Experiment orchestrator: one experiment is
//! load -> gate-filter -> resample -> partition -> normalize(fit on train)
//! -> split series -> assemble -> train -> evaluate, with an end-to-end
//! leakage guard on the actual sample streams.

mod report;
mod sweep;

pub use report::{read_report_kv, render_report, write_report_files, ExperimentReport};
pub use sweep::{parse_sweep_tsv, run_sweep, summarize, summary_tsv, sweep_tsv, SweepCell, SweepResult};

use std::collections::BTreeSet;
use std::path::PathBuf;

use crate::augment::augment_partition;
use crate::dataset::{
    default_gate_threshold, grasp_gate, load_dataset, partition_by_grasp, resample_to_canonical,
    DatasetSplit, GraspRecording, Sensor, TaxelLayout, CANONICAL_SAMPLES,
};
use crate::models::{build, evaluate, train, Arch, ModelSpec, Sample, TrainOptions};
use crate::nn::Checkpoint;
use crate::preprocess::{assemble, fit_normalizer, NormKind, NormScope};
use crate::seed;
use crate::{Error, Result};

/// One row of the experiment matrix.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset_dir: PathBuf,
    pub sensor: Sensor,
    pub arch: Arch,
    pub split_ratio: usize,
    pub norm: NormKind,
    pub norm_scope: NormScope,
    pub filtered: bool,
    pub blur_kernel: usize,
    pub shift_augment: bool,
    pub seed: u64,
    pub epochs: usize,
    pub val_fraction: f64,
    /// Optional held-out fraction carved off before the train/val split.
    pub test_fraction: f64,
    pub batch_size: usize,
    pub gate_threshold: f64,
    /// Worker threads for sweeps/searches; 0 uses the rayon default.
    pub workers: usize,
    /// Alternative BioTac taxel map (data-file injection point).
    pub biotac_layout: Option<PathBuf>,
    pub model: ModelSpec,
}

impl ExperimentConfig {
    pub fn new(dataset_dir: impl Into<PathBuf>, sensor: Sensor, arch: Arch) -> Self {
        ExperimentConfig {
            dataset_dir: dataset_dir.into(),
            sensor,
            arch,
            split_ratio: 1,
            norm: NormKind::Scaled,
            norm_scope: NormScope::Global,
            filtered: false,
            blur_kernel: 3,
            shift_augment: false,
            seed: 0,
            epochs: 150,
            val_fraction: 0.2,
            test_fraction: 0.0,
            batch_size: 16,
            gate_threshold: default_gate_threshold(),
            workers: 0,
            biotac_layout: None,
            model: ModelSpec::defaults(arch),
        }
    }

    /// Same experiment with a different architecture; scalar model knobs
    /// carry over, the conv stack is re-derived for the new depth.
    pub fn for_arch(&self, arch: Arch) -> Self {
        let first = self.model.conv_nodes.first().copied().unwrap_or(8);
        let conv_nodes = match arch.conv_layers() {
            1 => vec![first],
            2 => vec![first, first * 2],
            _ => Vec::new(),
        };
        ExperimentConfig {
            arch,
            model: ModelSpec {
                arch,
                conv_nodes,
                pool: arch.conv_layers() == 2,
                ..self.model.clone()
            },
            ..self.clone()
        }
    }

    /// Applies one `key=value` setting (config files and CLI overrides).
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::invalid(format!("bad {what} value `{value}`"));
        match key {
            "sensor" => self.sensor = Sensor::from_str(value)?,
            "arch" => {
                let arch = Arch::from_str(value)?;
                *self = self.for_arch(arch);
            }
            "split_ratio" => self.split_ratio = value.parse().map_err(|_| bad(key))?,
            "norm" => self.norm = NormKind::from_str(value)?,
            "norm_scope" => self.norm_scope = NormScope::from_str(value)?,
            "filtered" => self.filtered = parse_bool(value)?,
            "blur_kernel" => self.blur_kernel = value.parse().map_err(|_| bad(key))?,
            "shift_augment" => self.shift_augment = parse_bool(value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad(key))?,
            "val_fraction" => self.val_fraction = value.parse().map_err(|_| bad(key))?,
            "test_fraction" => self.test_fraction = value.parse().map_err(|_| bad(key))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad(key))?,
            "gate_threshold" => self.gate_threshold = value.parse().map_err(|_| bad(key))?,
            "workers" => self.workers = value.parse().map_err(|_| bad(key))?,
            "biotac_layout" => self.biotac_layout = Some(PathBuf::from(value)),
            "learning_rate" => self.model.learning_rate = value.parse().map_err(|_| bad(key))?,
            "lstm_nodes" => self.model.lstm_nodes = value.parse().map_err(|_| bad(key))?,
            "dense_nodes" => self.model.dense_nodes = value.parse().map_err(|_| bad(key))?,
            "conv_nodes" => {
                self.model.conv_nodes = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(key))?;
            }
            "kernel_space" => {
                let (h, w) = match value.split_once('x') {
                    Some((h, w)) => (
                        h.parse().map_err(|_| bad(key))?,
                        w.parse().map_err(|_| bad(key))?,
                    ),
                    None => {
                        let k = value.parse().map_err(|_| bad(key))?;
                        (k, k)
                    }
                };
                self.model.kernel_space = (h, w);
            }
            "kernel_time" => self.model.kernel_time = value.parse().map_err(|_| bad(key))?,
            "dropout_layer" => self.model.dropout_layer = value.parse().map_err(|_| bad(key))?,
            "dropout_dense" => self.model.dropout_dense = value.parse().map_err(|_| bad(key))?,
            "recurrent_dropout" => {
                self.model.lstm_recurrent_dropout = value.parse().map_err(|_| bad(key))?
            }
            "pool" => self.model.pool = parse_bool(value)?,
            other => return Err(Error::invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Effective settings as ordered key=value pairs for reports.
    pub fn summary_kv(&self) -> Vec<(String, String)> {
        let conv = self
            .model
            .conv_nodes
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("dataset".into(), self.dataset_dir.display().to_string()),
            ("sensor".into(), self.sensor.as_str().into()),
            ("arch".into(), self.arch.as_str().into()),
            ("split_ratio".into(), self.split_ratio.to_string()),
            ("norm".into(), self.norm.as_str().into()),
            ("norm_scope".into(), self.norm_scope.as_str().into()),
            ("filtered".into(), self.filtered.to_string()),
            ("shift_augment".into(), self.effective_shift().to_string()),
            ("seed".into(), self.seed.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("val_fraction".into(), self.val_fraction.to_string()),
            ("test_fraction".into(), self.test_fraction.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("learning_rate".into(), self.model.learning_rate.to_string()),
            ("conv_nodes".into(), conv),
            (
                "kernel_space".into(),
                format!("{}x{}", self.model.kernel_space.0, self.model.kernel_space.1),
            ),
            ("kernel_time".into(), self.model.kernel_time.to_string()),
            ("lstm_nodes".into(), self.model.lstm_nodes.to_string()),
            ("dense_nodes".into(), self.model.dense_nodes.to_string()),
            ("dropout_layer".into(), self.model.dropout_layer.to_string()),
            ("dropout_dense".into(), self.model.dropout_dense.to_string()),
            (
                "recurrent_dropout".into(),
                self.model.lstm_recurrent_dropout.to_string(),
            ),
            ("pool".into(), self.model.pool.to_string()),
        ]
    }

    /// Shift augmentation needs spatial axes; the LSTM layout has none.
    pub fn effective_shift(&self) -> bool {
        self.shift_augment && self.arch.layout().has_spatial_axes()
    }

    fn taxel_layout(&self) -> Result<TaxelLayout> {
        match (&self.biotac_layout, self.sensor) {
            (Some(path), Sensor::BioTacSp) => {
                let text = std::fs::read_to_string(path)?;
                TaxelLayout::from_table(Sensor::BioTacSp, &text, &path.display().to_string())
            }
            _ => Ok(TaxelLayout::for_sensor(self.sensor)),
        }
    }
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::invalid(format!("bad boolean `{other}`"))),
    }
}

/// Ratio-independent pipeline stage: gate-filtered, resampled, normalized
/// recordings plus the grasp-level partition. A sweep computes this once
/// and reuses it for every (arch, ratio) cell.
#[derive(Debug, Clone)]
pub struct StagedData {
    pub recordings: Vec<GraspRecording>,
    pub test_recordings: Vec<GraspRecording>,
    pub split: DatasetSplit,
    pub layout: TaxelLayout,
    pub gate_dropped: usize,
}

pub fn stage(config: &ExperimentConfig) -> Result<StagedData> {
    let raw = load_dataset(&config.dataset_dir)?;
    if raw.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    if let Some(bad) = raw.iter().find(|r| r.sensor != config.sensor) {
        return Err(Error::invalid(format!(
            "dataset contains {} recordings but the experiment expects {}",
            bad.sensor.as_str(),
            config.sensor.as_str()
        )));
    }
    let layout = config.taxel_layout()?;

    let mut gate_dropped = 0;
    let mut kept = Vec::with_capacity(raw.len());
    for r in raw {
        if grasp_gate(&r, config.gate_threshold)? {
            kept.push(resample_to_canonical(&r)?);
        } else {
            gate_dropped += 1;
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("grasp gate rejected every recording"));
    }

    // Optional held-out test grasps, carved off before the train/val split.
    let (mut working, test_raw) = if config.test_fraction > 0.0 {
        let test_split = partition_by_grasp(
            &kept,
            config.test_fraction,
            seed::derive(config.seed, &[seed::stream::PARTITION, 1]),
        )?;
        let (test, rest): (Vec<_>, Vec<_>) = kept
            .into_iter()
            .partition(|r| test_split.val_ids.contains(&r.grasp_id));
        (rest, test)
    } else {
        (kept, Vec::new())
    };

    let split = partition_by_grasp(&working, config.val_fraction, config.seed)?;

    let train_recs: Vec<GraspRecording> = working
        .iter()
        .filter(|r| split.train_ids.contains(&r.grasp_id))
        .cloned()
        .collect();
    let normalizer = fit_normalizer(&train_recs, config.norm, config.norm_scope)?;
    for r in &mut working {
        *r = normalizer.apply(r);
    }
    let test_recordings: Vec<GraspRecording> =
        test_raw.iter().map(|r| normalizer.apply(r)).collect();

    Ok(StagedData {
        recordings: working,
        test_recordings,
        split,
        layout,
        gate_dropped,
    })
}

/// Fails with `Error::Leakage` if any grasp id reaches both streams.
pub fn assert_no_leakage(
    train_ids: impl IntoIterator<Item = u32>,
    val_ids: impl IntoIterator<Item = u32>,
) -> Result<()> {
    let train: BTreeSet<u32> = train_ids.into_iter().collect();
    let val: BTreeSet<u32> = val_ids.into_iter().collect();
    let shared: Vec<u32> = train.intersection(&val).copied().collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage { ids: shared })
    }
}

fn assemble_all(
    recordings: &[GraspRecording],
    config: &ExperimentConfig,
    layout: &TaxelLayout,
) -> Result<Vec<Sample>> {
    let blur = (config.filtered && config.arch.layout().has_spatial_axes())
        .then_some(config.blur_kernel);
    recordings
        .iter()
        .map(|r| assemble(r, layout, config.arch.layout(), blur))
        .collect()
}

pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub checkpoint: Checkpoint,
}

/// Runs one full experiment from a staged pipeline.
pub fn run_cell(config: &ExperimentConfig, staged: &StagedData) -> Result<ExperimentOutput> {
    let parts = augment_partition(
        &staged.recordings,
        &staged.split,
        config.split_ratio,
        config.effective_shift(),
    )?;
    let derived_length = CANONICAL_SAMPLES.div_ceil(config.split_ratio);
    for r in parts.train.iter().chain(&parts.val) {
        if r.samples != derived_length {
            return Err(Error::invalid(format!(
                "split series length {} disagrees with ceil(63/{}) = {derived_length}",
                r.samples, config.split_ratio
            )));
        }
    }

    let train_samples = assemble_all(&parts.train, config, &staged.layout)?;
    let val_samples = assemble_all(&parts.val, config, &staged.layout)?;

    // End-to-end guard on the streams actually fed to training.
    assert_no_leakage(
        train_samples.iter().map(|s| s.grasp_id),
        val_samples.iter().map(|s| s.grasp_id),
    )?;

    let input_shape = train_samples
        .first()
        .map(|s| s.tensor.shape().to_vec())
        .ok_or_else(|| Error::invalid("empty training stream"))?;

    let mut spec = config.model.clone();
    spec.arch = config.arch;
    let mut net = build(&spec, &input_shape, config.seed)?;
    let mut topts = TrainOptions::new(
        config.arch.layout(),
        spec.learning_rate,
        config.epochs,
        config.seed,
    );
    topts.batch_size = config.batch_size;
    topts.shift_augment = parts.shift_train;
    let outcome = train(&mut net, &train_samples, &val_samples, &topts)?;

    // The network holds the best-epoch weights after training.
    let (val_accuracy, confusion) = evaluate(&mut net, &val_samples)?;

    let test_accuracy = if staged.test_recordings.is_empty() {
        None
    } else {
        let mut test_recs = Vec::new();
        for r in &staged.test_recordings {
            test_recs.extend(crate::augment::split_recording(r, config.split_ratio)?);
        }
        let test_samples = assemble_all(&test_recs, config, &staged.layout)?;
        assert_no_leakage(
            train_samples.iter().map(|s| s.grasp_id),
            test_samples.iter().map(|s| s.grasp_id),
        )?;
        Some(evaluate(&mut net, &test_samples)?.0)
    };

    let report = ExperimentReport {
        config: config.summary_kv(),
        val_accuracy,
        test_accuracy,
        confusion,
        history: outcome.history,
        derived_length,
        train_series: train_samples.len(),
        val_series: val_samples.len(),
        gate_dropped: staged.gate_dropped,
        best_epoch: outcome.best_epoch,
    };
    Ok(ExperimentOutput {
        report,
        checkpoint: outcome.checkpoint,
    })
}

/// Stages the pipeline and runs a single experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let staged = stage(config)?;
    run_cell(config, &staged)
}

/// Rebuilds the experiment's validation stream and evaluates a saved
/// checkpoint on it (no training).
pub fn evaluate_checkpoint(
    config: &ExperimentConfig,
    checkpoint: &Checkpoint,
) -> Result<ExperimentReport> {
    let staged = stage(config)?;
    let parts = augment_partition(
        &staged.recordings,
        &staged.split,
        config.split_ratio,
        false,
    )?;
    let val_samples = assemble_all(&parts.val, config, &staged.layout)?;
    let train_ids: Vec<u32> = parts.train.iter().map(|r| r.grasp_id).collect();
    assert_no_leakage(train_ids, val_samples.iter().map(|s| s.grasp_id))?;
    let input_shape = val_samples
        .first()
        .map(|s| s.tensor.shape().to_vec())
        .ok_or_else(|| Error::invalid("empty validation stream"))?;

    let mut spec = config.model.clone();
    spec.arch = config.arch;
    let mut net = build(&spec, &input_shape, config.seed)?;
    checkpoint.apply_to(&mut net)?;
    let (val_accuracy, confusion) = evaluate(&mut net, &val_samples)?;
    Ok(ExperimentReport {
        config: config.summary_kv(),
        val_accuracy,
        test_accuracy: None,
        confusion,
        history: Vec::new(),
        derived_length: CANONICAL_SAMPLES.div_ceil(config.split_ratio),
        train_series: 0,
        val_series: val_samples.len(),
        gate_dropped: staged.gate_dropped,
        best_epoch: None,
    })
}
