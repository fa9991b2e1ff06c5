//! Report rendering and the machine-readable report.kv file.
//!
//! A report renders to diffable text; the `.kv` form parses back into an
//! equivalent report so re-rendering is byte-identical.

use std::fs;
use std::path::Path;

use crate::dataset::NUM_CLASSES;
use crate::models::{ConfusionMatrix, EpochStats};
use crate::{Error, Result};

pub const REPORT_MAGIC: &str = "#TAXELGRASP-REPORT v1";

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// Effective configuration, ordered.
    pub config: Vec<(String, String)>,
    pub val_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub history: Vec<EpochStats>,
    pub derived_length: usize,
    pub train_series: usize,
    pub val_series: usize,
    pub gate_dropped: usize,
    pub best_epoch: Option<usize>,
}

/// Table-style percentage: one decimal, e.g. 0.9434 -> "94.3 %".
pub fn format_percent(fraction: f64) -> String {
    format!("{:.1} %", fraction * 100.0)
}

pub fn render_report(report: &ExperimentReport) -> String {
    let mut out = String::from("taxelgrasp experiment report\n");
    out.push_str("============================\n\n");
    for (k, v) in &report.config {
        out.push_str(&format!("{k}={v}\n"));
    }
    out.push('\n');
    out.push_str(&format!("time_series_length: {}\n", report.derived_length));
    out.push_str(&format!("train_series: {}\n", report.train_series));
    out.push_str(&format!("val_series: {}\n", report.val_series));
    out.push_str(&format!("gate_dropped: {}\n", report.gate_dropped));
    match report.best_epoch {
        Some(e) => out.push_str(&format!("best_epoch: {e}\n")),
        None => out.push_str("best_epoch: none\n"),
    }
    out.push_str(&format!(
        "validation accuracy: {}\n",
        format_percent(report.val_accuracy)
    ));
    if let Some(t) = report.test_accuracy {
        out.push_str(&format!("test accuracy: {}\n", format_percent(t)));
    }
    out.push_str("\nconfusion matrix (rows true, columns predicted):\n");
    out.push_str(&report.confusion.to_tsv());
    out
}

pub fn report_kv(report: &ExperimentReport) -> String {
    let mut out = String::from(REPORT_MAGIC);
    out.push('\n');
    for (k, v) in &report.config {
        out.push_str(&format!("config.{k}={v}\n"));
    }
    out.push_str(&format!("val_accuracy={}\n", report.val_accuracy));
    match report.test_accuracy {
        Some(t) => out.push_str(&format!("test_accuracy={t}\n")),
        None => out.push_str("test_accuracy=none\n"),
    }
    out.push_str(&format!("derived_length={}\n", report.derived_length));
    out.push_str(&format!("train_series={}\n", report.train_series));
    out.push_str(&format!("val_series={}\n", report.val_series));
    out.push_str(&format!("gate_dropped={}\n", report.gate_dropped));
    match report.best_epoch {
        Some(e) => out.push_str(&format!("best_epoch={e}\n")),
        None => out.push_str("best_epoch=none\n"),
    }
    for (i, row) in report.confusion.counts().iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("confusion.{i}={}\n", cells.join(",")));
    }
    out
}

pub fn read_report_kv(text: &str, origin: &str) -> Result<ExperimentReport> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == REPORT_MAGIC => {}
        Some((n, l)) => return Err(Error::format(origin, n + 1, format!("bad magic `{l}`"))),
        None => return Err(Error::format(origin, 1, "empty report")),
    }
    let mut config = Vec::new();
    let mut val_accuracy = None;
    let mut test_accuracy = None;
    let mut derived_length = None;
    let mut train_series = None;
    let mut val_series = None;
    let mut gate_dropped = None;
    let mut best_epoch = None;
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); NUM_CLASSES];
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(origin, n + 1, format!("expected key=value `{line}`")))?;
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::format(origin, n + 1, format!("bad number `{v}`")))
        };
        let parse_usize = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::format(origin, n + 1, format!("bad integer `{v}`")))
        };
        if let Some(name) = k.strip_prefix("config.") {
            config.push((name.to_string(), v.to_string()));
        } else if let Some(i) = k.strip_prefix("confusion.") {
            let i: usize = parse_usize(i)?;
            if i >= NUM_CLASSES {
                return Err(Error::format(origin, n + 1, format!("confusion row {i}")));
            }
            rows[i] = v
                .split(',')
                .map(|s| s.parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(origin, n + 1, "bad confusion row"))?;
        } else {
            match k {
                "val_accuracy" => val_accuracy = Some(parse_f64(v)?),
                "test_accuracy" => {
                    test_accuracy = if v == "none" { None } else { Some(parse_f64(v)?) }
                }
                "derived_length" => derived_length = Some(parse_usize(v)?),
                "train_series" => train_series = Some(parse_usize(v)?),
                "val_series" => val_series = Some(parse_usize(v)?),
                "gate_dropped" => gate_dropped = Some(parse_usize(v)?),
                "best_epoch" => {
                    best_epoch = if v == "none" { None } else { Some(parse_usize(v)?) }
                }
                other => {
                    return Err(Error::format(origin, n + 1, format!("unknown key `{other}`")))
                }
            }
        }
    }
    let mut pairs = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != NUM_CLASSES {
            return Err(Error::format(origin, 1, format!("missing confusion row {i}")));
        }
        for (j, count) in row.iter().enumerate() {
            for _ in 0..*count {
                pairs.push((i, j));
            }
        }
    }
    let confusion = ConfusionMatrix::from_pairs(pairs)?;
    let missing = |what: &str| Error::format(origin, 1, format!("missing `{what}`"));
    Ok(ExperimentReport {
        config,
        val_accuracy: val_accuracy.ok_or_else(|| missing("val_accuracy"))?,
        test_accuracy,
        confusion,
        history: Vec::new(),
        derived_length: derived_length.ok_or_else(|| missing("derived_length"))?,
        train_series: train_series.ok_or_else(|| missing("train_series"))?,
        val_series: val_series.ok_or_else(|| missing("val_series"))?,
        gate_dropped: gate_dropped.ok_or_else(|| missing("gate_dropped"))?,
        best_epoch,
    })
}

pub fn history_tsv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch\ttrain_loss\tval_acc\n");
    for e in history {
        out.push_str(&format!("{}\t{}\t{}\n", e.epoch, e.train_loss, e.val_acc));
    }
    out
}

/// Writes report.txt, report.kv, confusion.tsv, history.tsv into `dir`.
pub fn write_report_files(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.txt"), render_report(report))?;
    fs::write(dir.join("report.kv"), report_kv(report))?;
    fs::write(dir.join("confusion.tsv"), report.confusion.to_tsv())?;
    fs::write(dir.join("history.tsv"), history_tsv(&report.history))?;
    Ok(())
}
