//! End-to-end CLI behavior: exit codes, file outputs, report re-rendering.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn taxelgrasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taxelgrasp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn generate(dir: &Path, sensor: &str, n: usize) {
    let out = taxelgrasp(&[
        "generate",
        "--out",
        dir.to_str().unwrap(),
        "--sensor",
        sensor,
        "--n-per-class",
        &n.to_string(),
        "--seed",
        "0",
    ]);
    assert_ok(&out);
}

#[test]
fn generate_writes_manifest_and_collides_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "biotac", 2);
    assert!(ds.join("manifest.tsv").exists());
    let count = fs::read_dir(&ds).unwrap().count();
    assert_eq!(count, 9 * 2 + 1);

    // Re-generating into the same directory must fail with a reason.
    let out = taxelgrasp(&[
        "generate", "--out", ds.to_str().unwrap(), "--sensor", "biotac",
        "--n-per-class", "2", "--seed", "0",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not empty"));
}

#[test]
fn gate_check_passes_synthetic_data_and_flags_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "biotac", 1);
    let out = taxelgrasp(&["gate-check", "--dataset", ds.to_str().unwrap()]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("9/9 recordings pass"));

    // An absurd threshold fails every recording and exits non-zero.
    let out = taxelgrasp(&[
        "gate-check", "--dataset", ds.to_str().unwrap(), "--threshold", "1e9",
    ]);
    assert!(!out.status.success());
}

#[test]
fn train_eval_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "biotac", 4);
    let run = tmp.path().join("run");
    let cfg = tmp.path().join("tiny.cfg");
    fs::write(&cfg, "lstm_nodes=4\ndense_nodes=6\nepochs=2\n").unwrap();

    let out = taxelgrasp(&[
        "train",
        "--dataset", ds.to_str().unwrap(),
        "--sensor", "biotac",
        "--arch", "lstm1",
        "--split-ratio", "3",
        "--seed", "7",
        "--config", cfg.to_str().unwrap(),
        "--out", run.to_str().unwrap(),
    ]);
    assert_ok(&out);
    for f in ["report.txt", "report.kv", "confusion.tsv", "history.tsv", "checkpoint.ckpt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let report_txt = fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(report_txt.contains("time_series_length: 21"));

    // `report` re-renders the kv byte-identically.
    let rerender = tmp.path().join("rerender.txt");
    let out = taxelgrasp(&[
        "report",
        "--report", run.join("report.kv").to_str().unwrap(),
        "--out", rerender.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert_eq!(fs::read(&rerender).unwrap(), fs::read(run.join("report.txt")).unwrap());

    // `eval` reloads the checkpoint and reproduces the validation accuracy.
    let out = taxelgrasp(&[
        "eval",
        "--dataset", ds.to_str().unwrap(),
        "--sensor", "biotac",
        "--arch", "lstm1",
        "--split-ratio", "3",
        "--seed", "7",
        "--config", cfg.to_str().unwrap(),
        "--checkpoint", run.join("checkpoint.ckpt").to_str().unwrap(),
    ]);
    assert_ok(&out);
    let eval_txt = String::from_utf8_lossy(&out.stdout).to_string();
    let acc_line = |text: &str| {
        text.lines()
            .find(|l| l.starts_with("validation accuracy:"))
            .unwrap()
            .to_string()
    };
    assert_eq!(acc_line(&eval_txt), acc_line(&report_txt));
}

#[test]
fn unknown_arch_and_bad_config_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "biotac", 1);
    let out = taxelgrasp(&[
        "train", "--dataset", ds.to_str().unwrap(), "--arch", "resnet50",
        "--out", tmp.path().join("x").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown architecture"));

    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "split_ratio=banana\n").unwrap();
    let out = taxelgrasp(&[
        "train", "--dataset", ds.to_str().unwrap(), "--arch", "lstm1",
        "--config", cfg.to_str().unwrap(),
        "--out", tmp.path().join("y").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn sensor_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    generate(&ds, "wtsft", 1);
    let out = taxelgrasp(&[
        "train", "--dataset", ds.to_str().unwrap(), "--sensor", "biotac",
        "--arch", "lstm1", "--epochs", "1",
        "--out", tmp.path().join("z").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("expects"));
}
