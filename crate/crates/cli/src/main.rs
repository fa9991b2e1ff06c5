//! taxelgrasp: experiment harness CLI for tactile grasp classification.
//!
//! Subcommands mirror the experiment pipeline: `generate` synthesizes a
//! TACREC dataset, `gate-check` audits the grasp gate, `train`/`eval` run
//! single experiments, `sweep` runs the architecture x split-ratio matrix,
//! `search` runs hyperparameter search, `report` re-renders a saved report.
//! Every command is deterministic for a fixed seed; outputs are plain text.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use taxelgrasp_core::dataset::{grasp_gate, load_dataset, Sensor};
use taxelgrasp_core::harness::{
    evaluate_checkpoint, read_report_kv, render_report, run_experiment, run_sweep, summary_tsv,
    sweep_tsv, write_report_files, ExperimentConfig,
};
use taxelgrasp_core::hpsearch::{
    kernel_grid_tsv, report_tsv, search, SearchMode, SearchOptions, SearchSpace,
};
use taxelgrasp_core::models::Arch;
use taxelgrasp_core::nn::Checkpoint;
use taxelgrasp_core::synthgrasp::{default_profiles, generate_dataset, parse_profiles};

#[derive(Parser)]
#[command(name = "taxelgrasp", version, about = "Tactile grasp classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the experiment-running subcommands. Precedence:
/// built-in defaults, then `--config` file entries, then explicit flags.
#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Dataset directory (TACREC files + manifest.tsv)
    #[arg(long)]
    dataset: PathBuf,

    /// Sensor geometry: biotac | wtsft
    #[arg(long, default_value = "biotac")]
    sensor: String,

    /// Architecture: cnn2d1 | cnn2d2 | cnn3d1 | cnn3d2 | lstm1
    #[arg(long, default_value = "lstm1")]
    arch: String,

    /// Interleaved series-splitting ratio k
    #[arg(long)]
    split_ratio: Option<usize>,

    /// Normalization: scaled | standardized
    #[arg(long)]
    norm: Option<String>,

    /// Blur each finger grid before stacking
    #[arg(long)]
    filtered: bool,

    /// Random taxel shifts during training (2D/3D layouts)
    #[arg(long)]
    shift: bool,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    val_fraction: Option<f64>,

    #[arg(long)]
    batch_size: Option<usize>,

    /// Worker threads for sweeps and searches (0 = automatic)
    #[arg(long)]
    workers: Option<usize>,

    /// key=value file applied before explicit flags
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ExperimentArgs {
    fn build(&self) -> Result<ExperimentConfig> {
        let sensor = Sensor::from_str(&self.sensor)?;
        let arch = Arch::from_str(&self.arch)?;
        let mut config = ExperimentConfig::new(&self.dataset, sensor, arch);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (n, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .with_context(|| format!("{}:{}: expected key=value", path.display(), n + 1))?;
                config
                    .apply_kv(k.trim(), v.trim())
                    .with_context(|| format!("{}:{}", path.display(), n + 1))?;
            }
            // The config file may override sensor/arch; explicit flags win.
            config.dataset_dir = self.dataset.clone();
        }
        let mut set = |k: &str, v: String| config.apply_kv(k, &v);
        set("sensor", self.sensor.clone())?;
        set("arch", self.arch.clone())?;
        if let Some(v) = self.split_ratio {
            set("split_ratio", v.to_string())?;
        }
        if let Some(v) = &self.norm {
            set("norm", v.clone())?;
        }
        if self.filtered {
            set("filtered", "true".into())?;
        }
        if self.shift {
            set("shift_augment", "true".into())?;
        }
        if let Some(v) = self.seed {
            set("seed", v.to_string())?;
        }
        if let Some(v) = self.epochs {
            set("epochs", v.to_string())?;
        }
        if let Some(v) = self.val_fraction {
            set("val_fraction", v.to_string())?;
        }
        if let Some(v) = self.batch_size {
            set("batch_size", v.to_string())?;
        }
        if let Some(v) = self.workers {
            set("workers", v.to_string())?;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic TACREC dataset
    Generate {
        /// Output directory (must not already contain files)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "biotac")]
        sensor: String,
        #[arg(long, default_value_t = 40)]
        n_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Object profile file (defaults to the built-in v1 profiles)
        #[arg(long)]
        profiles: Option<PathBuf>,
    },

    /// Verify the grasp gate over every recording in a dataset
    GateCheck {
        #[arg(long)]
        dataset: PathBuf,
        /// Pressure threshold (default: 2% of full scale)
        #[arg(long)]
        threshold: Option<f64>,
    },

    /// Train one model and write report + checkpoint
    Train {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Output directory for report files and checkpoint.ckpt
        #[arg(long)]
        out: PathBuf,
    },

    /// Evaluate a saved checkpoint on the experiment's validation split
    Eval {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional directory for report files
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Run the architecture x split-ratio experiment matrix
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Architectures, comma separated
        #[arg(long, default_value = "cnn2d1,cnn2d2,cnn3d1,cnn3d2,lstm1")]
        archs: String,
        /// Split ratios, comma separated
        #[arg(long, default_value = "1,3,5,7")]
        ratios: String,
        #[arg(long)]
        out: PathBuf,
    },

    /// Hyperparameter search for one architecture
    Search {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// grid | random
        #[arg(long, default_value = "grid")]
        mode: String,
        /// Maximum number of trials
        #[arg(long, default_value_t = 16)]
        budget: usize,
        /// Output TSV path
        #[arg(long)]
        out: PathBuf,
    },

    /// Re-render a saved report.kv
    Report {
        #[arg(long)]
        report: PathBuf,
        /// Write the rendering here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_list<T, F: Fn(&str) -> Result<T>>(list: &str, parse: F) -> Result<Vec<T>> {
    list.split(',')
        .map(|s| parse(s.trim()))
        .collect::<Result<Vec<_>>>()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            out,
            sensor,
            n_per_class,
            seed,
            profiles,
        } => {
            let sensor = Sensor::from_str(&sensor)?;
            let profiles = match profiles {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading profiles {}", path.display()))?;
                    parse_profiles(&text, &path.display().to_string())?
                }
                None => default_profiles(),
            };
            let entries = generate_dataset(&profiles, n_per_class, sensor, seed, &out)?;
            println!(
                "wrote {} recordings ({} per class) to {}",
                entries.len(),
                n_per_class,
                out.display()
            );
        }

        Command::GateCheck { dataset, threshold } => {
            let recordings = load_dataset(&dataset)?;
            let threshold =
                threshold.unwrap_or_else(taxelgrasp_core::dataset::default_gate_threshold);
            let mut failures = 0usize;
            for r in &recordings {
                let ok = grasp_gate(r, threshold)?;
                let verdict = if ok { "pass" } else { "fail" };
                println!("{}_{:06}\t{verdict}", r.object.name(), r.grasp_id);
                if !ok {
                    failures += 1;
                }
            }
            println!(
                "gate-check: {}/{} recordings pass (threshold {threshold})",
                recordings.len() - failures,
                recordings.len()
            );
            if failures > 0 {
                bail!("{failures} recordings fail the grasp gate");
            }
        }

        Command::Train { experiment, out } => {
            let config = experiment.build()?;
            let output = run_experiment(&config)?;
            write_report_files(&out, &output.report)?;
            output.checkpoint.save(&out.join("checkpoint.ckpt"))?;
            print!("{}", render_report(&output.report));
        }

        Command::Eval {
            experiment,
            checkpoint,
            out,
        } => {
            let config = experiment.build()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let report = evaluate_checkpoint(&config, &ckpt)?;
            if let Some(dir) = out {
                write_report_files(&dir, &report)?;
            }
            print!("{}", render_report(&report));
        }

        Command::Sweep {
            experiment,
            archs,
            ratios,
            out,
        } => {
            let config = experiment.build()?;
            let archs = parse_list(&archs, |s| Ok(Arch::from_str(s)?))?;
            let ratios = parse_list(&ratios, |s| {
                s.parse::<usize>().context("bad split ratio")
            })?;
            let result = run_sweep(&config, &archs, &ratios)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("sweep.tsv"), sweep_tsv(&result))?;
            let summary = result.summary();
            fs::write(out.join("summary.tsv"), summary_tsv(&summary))?;
            for arch in &archs {
                fs::write(
                    out.join(format!("curve_{}.tsv", arch.as_str())),
                    result.curve_tsv(*arch),
                )?;
            }
            print!("{}", summary_tsv(&summary));
        }

        Command::Search {
            experiment,
            mode,
            budget,
            out,
        } => {
            let config = experiment.build()?;
            let mode = SearchMode::from_str(&mode)?;
            // Stage the pipeline once and search on the assembled streams.
            let staged = taxelgrasp_core::harness::stage(&config)?;
            let parts = taxelgrasp_core::augment::augment_partition(
                &staged.recordings,
                &staged.split,
                config.split_ratio,
                false,
            )?;
            let layout = config.arch.layout();
            let blur = (config.filtered && layout.has_spatial_axes())
                .then_some(config.blur_kernel);
            let to_samples = |recs: &[taxelgrasp_core::dataset::GraspRecording]| {
                recs.iter()
                    .map(|r| taxelgrasp_core::preprocess::assemble(r, &staged.layout, layout, blur))
                    .collect::<taxelgrasp_core::Result<Vec<_>>>()
            };
            let train_samples = to_samples(&parts.train)?;
            let val_samples = to_samples(&parts.val)?;
            let opts = SearchOptions {
                mode,
                budget,
                seed: config.seed,
                epochs: config.epochs,
                batch_size: config.batch_size,
                workers: config.workers,
            };
            let space = SearchSpace::default();
            let trials = search(&space, config.arch, &train_samples, &val_samples, &opts)?;
            fs::write(&out, report_tsv(&trials))?;
            if matches!(config.arch, Arch::Cnn3d1 | Arch::Cnn3d2) {
                let grid_path = out.with_extension("kernel_grid.tsv");
                fs::write(&grid_path, kernel_grid_tsv(&trials))?;
            }
            if let Some(best) = trials.first() {
                println!(
                    "best trial {}: val_acc {} ({} parameters)",
                    best.index, best.val_acc, best.param_count
                );
            }
        }

        Command::Report { report, out } => {
            let text = fs::read_to_string(&report)
                .with_context(|| format!("reading {}", report.display()))?;
            let parsed = read_report_kv(&text, &report.display().to_string())?;
            let rendered = render_report(&parsed);
            match out {
                Some(path) => fs::write(path, rendered)?,
                None => print!("{rendered}"),
            }
        }
    }
    Ok(())
}
