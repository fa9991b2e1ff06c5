//! The experiment matrix: architectures x split ratios, with
//! accuracy-vs-length curves and a per-architecture maximum summary.

use rayon::prelude::*;

use super::{run_cell, stage, ExperimentConfig};
use crate::dataset::CANONICAL_SAMPLES;
use crate::models::Arch;
use crate::preprocess::NormKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub arch: Arch,
    pub split_ratio: usize,
    pub derived_length: usize,
    pub norm: NormKind,
    /// Validation accuracy, or the failure reason.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

/// Runs every (arch, ratio) cell. Failed cells are marked and the sweep
/// continues. Cells run concurrently (`config.workers` threads, 0 = rayon
/// default); results are collected in deterministic arch-major order.
pub fn run_sweep(
    base: &ExperimentConfig,
    archs: &[Arch],
    ratios: &[usize],
) -> Result<SweepResult> {
    if archs.is_empty() || ratios.is_empty() {
        return Err(Error::invalid("sweep needs at least one arch and ratio"));
    }
    let staged = stage(base)?;
    let configs: Vec<ExperimentConfig> = archs
        .iter()
        .flat_map(|&arch| {
            ratios.iter().map(move |&ratio| {
                let mut c = base.for_arch(arch);
                c.split_ratio = ratio;
                c
            })
        })
        .collect();

    let run_all = || {
        configs
            .par_iter()
            .map(|config| {
                let outcome = run_cell(config, &staged)
                    .map(|out| out.report.val_accuracy)
                    .map_err(|e| e.to_string());
                SweepCell {
                    arch: config.arch,
                    split_ratio: config.split_ratio,
                    derived_length: CANONICAL_SAMPLES.div_ceil(config.split_ratio),
                    norm: config.norm,
                    outcome,
                }
            })
            .collect::<Vec<_>>()
    };
    let cells = if base.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(base.workers)
            .build()
            .map_err(|e| Error::invalid(format!("worker pool: {e}")))?
            .install(run_all)
    } else {
        run_all()
    };
    Ok(SweepResult { cells })
}

impl SweepResult {
    pub fn cell(&self, arch: Arch, ratio: usize) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.arch == arch && c.split_ratio == ratio)
    }

    /// Best (ratio, accuracy) per architecture, ties to the smaller ratio.
    pub fn summary(&self) -> Vec<(Arch, usize, f64)> {
        summarize(&self.cells)
    }

    /// Accuracy-vs-length rows for one architecture (ok cells only).
    pub fn curve_tsv(&self, arch: Arch) -> String {
        let mut out = String::from("split_ratio\ttime_series_length\tval_acc\n");
        for c in self.cells.iter().filter(|c| c.arch == arch) {
            if let Ok(acc) = &c.outcome {
                out.push_str(&format!("{}\t{}\t{}\n", c.split_ratio, c.derived_length, acc));
            }
        }
        out
    }
}

pub fn summarize(cells: &[SweepCell]) -> Vec<(Arch, usize, f64)> {
    let mut out: Vec<(Arch, usize, f64)> = Vec::new();
    for arch in Arch::ALL {
        let mut best: Option<(usize, f64)> = None;
        for c in cells.iter().filter(|c| c.arch == arch) {
            if let Ok(acc) = c.outcome {
                let better = match best {
                    None => true,
                    Some((_, b)) => acc > b,
                };
                if better {
                    best = Some((c.split_ratio, acc));
                }
            }
        }
        if let Some((ratio, acc)) = best {
            out.push((arch, ratio, acc));
        }
    }
    out
}

pub fn sweep_tsv(result: &SweepResult) -> String {
    let mut out = String::from("arch\tsplit_ratio\ttime_series_length\tnorm\tval_acc\tstatus\n");
    for c in &result.cells {
        match &c.outcome {
            Ok(acc) => out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\tok\n",
                c.arch.as_str(),
                c.split_ratio,
                c.derived_length,
                c.norm.as_str(),
                acc
            )),
            Err(reason) => out.push_str(&format!(
                "{}\t{}\t{}\t{}\t\tfailed: {}\n",
                c.arch.as_str(),
                c.split_ratio,
                c.derived_length,
                c.norm.as_str(),
                reason
            )),
        }
    }
    out
}

pub fn summary_tsv(summary: &[(Arch, usize, f64)]) -> String {
    let mut out = String::from("arch\tbest_split_ratio\tmax_val_acc\n");
    for (arch, ratio, acc) in summary {
        out.push_str(&format!("{}\t{}\t{}\n", arch.as_str(), ratio, acc));
    }
    out
}

/// Parses a sweep TSV back into cells (round-trip for the summary check).
pub fn parse_sweep_tsv(text: &str) -> Result<Vec<SweepCell>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("arch\tsplit_ratio\ttime_series_length\tnorm\tval_acc\tstatus") => {}
        other => {
            return Err(Error::invalid(format!("bad sweep header {other:?}")));
        }
    }
    let mut cells = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::invalid(format!("sweep row {} malformed", n + 2)));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::invalid(format!("bad integer `{s}`")))
        };
        let outcome = if fields[5] == "ok" {
            Ok(fields[4]
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad accuracy `{}`", fields[4])))?)
        } else {
            Err(fields[5].trim_start_matches("failed: ").to_string())
        };
        cells.push(SweepCell {
            arch: Arch::from_str(fields[0])?,
            split_ratio: parse(fields[1])?,
            derived_length: parse(fields[2])?,
            norm: NormKind::from_str(fields[3])?,
            outcome,
        });
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sensor;
    use crate::synthgrasp::{default_profiles, generate_dataset};

    fn mini_sweep() -> SweepResult {
        let dir = tempfile::tempdir().unwrap();
        let ds = dir.path().join("ds");
        generate_dataset(&default_profiles(), 5, Sensor::BioTacSp, 0, &ds).unwrap();
        let mut base = ExperimentConfig::new(&ds, Sensor::BioTacSp, Arch::Lstm1);
        base.epochs = 1;
        base.model.lstm_nodes = 4;
        base.model.dense_nodes = 6;
        base.model.conv_nodes = vec![2];
        base.workers = 2;
        run_sweep(&base, &[Arch::Lstm1, Arch::Cnn2d1], &[1, 7]).unwrap()
    }

    #[test]
    fn sweep_produces_one_row_per_cell_and_round_trips() {
        let result = mini_sweep();
        assert_eq!(result.cells.len(), 4);
        let tsv = sweep_tsv(&result);
        assert_eq!(tsv.lines().count(), 5);

        // Re-parsing and re-summarizing reproduces the summary exactly.
        let cells = parse_sweep_tsv(&tsv).unwrap();
        assert_eq!(cells, result.cells);
        assert_eq!(summary_tsv(&summarize(&cells)), summary_tsv(&result.summary()));
    }

    #[test]
    fn summary_max_equals_max_over_rows() {
        let result = mini_sweep();
        for (arch, best_ratio, best_acc) in result.summary() {
            let max = result
                .cells
                .iter()
                .filter(|c| c.arch == arch)
                .filter_map(|c| c.outcome.as_ref().ok().copied())
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(best_acc, max);
            assert_eq!(
                result.cell(arch, best_ratio).unwrap().outcome,
                Ok(best_acc)
            );
        }
    }

    #[test]
    fn failed_cells_are_marked_and_sweep_continues() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dir.path().join("ds");
        generate_dataset(&default_profiles(), 3, Sensor::BioTacSp, 0, &ds).unwrap();
        let mut base = ExperimentConfig::new(&ds, Sensor::BioTacSp, Arch::Cnn3d1);
        base.epochs = 1;
        base.model.conv_nodes = vec![2];
        base.model.dense_nodes = 4;
        // kernel_time 10 exceeds the length-9 series of ratio 7 but fits
        // ratio 1: exactly one cell fails.
        base.model.kernel_time = 10;
        let result = run_sweep(&base, &[Arch::Cnn3d1], &[1, 7]).unwrap();
        assert!(result.cell(Arch::Cnn3d1, 1).unwrap().outcome.is_ok());
        assert!(result.cell(Arch::Cnn3d1, 7).unwrap().outcome.is_err());
        let tsv = sweep_tsv(&result);
        assert!(tsv.contains("failed:"));
    }
}
