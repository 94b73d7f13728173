//! End-to-end exercises of the `msdcn` binary.

use std::path::Path;
use std::process::{Command, Output};

fn msdcn(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_msdcn"));
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

fn synth_csv(dir: &Path, n: usize, channels: usize) -> std::path::PathBuf {
    let csv = dir.join("series.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_msdcn"))
        .args(["synth", "--out"])
        .arg(&csv)
        .args([
            "--n",
            &n.to_string(),
            "--channels",
            &channels.to_string(),
            "--seed",
            "9",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    csv
}

#[test]
fn synth_same_flags_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = msdcn(
            &["synth", "--n", "300", "--channels", "4", "--seed", "11", "--out"],
            &[p],
        );
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    // Shape contract: header + 300 rows, 1 + 4 columns.
    let text = std::fs::read_to_string(&a).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split(',').count(), 5);
    assert!(header.starts_with("date,"));
    assert_eq!(lines.count(), 300);
}

#[test]
fn train_missing_file_names_path() {
    let out = msdcn(
        &["train", "--data", "/nonexistent/series.csv", "--out-dir", "/tmp/x"],
        &[],
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/series.csv"), "{stderr}");
}

#[test]
fn train_insufficient_rows_is_clear() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 30, 2);
    let out_dir = dir.path().join("run");
    let out = msdcn(
        &["train", "--lookback", "96", "--horizon", "96", "--data"],
        &[&csv, Path::new("--out-dir"), &out_dir],
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("too short") || stderr.contains("rows"), "{stderr}");
}

#[test]
fn train_then_dump_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 600, 3);
    let out_dir = dir.path().join("run");
    let out = msdcn(
        &[
            "train",
            "--lookback",
            "48",
            "--horizon",
            "24",
            "--max-epochs",
            "2",
            "--data",
        ],
        &[&csv, Path::new("--out-dir"), &out_dir],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for artifact in ["model.ckpt", "history.jsonl", "report.json", "report.txt"] {
        assert!(out_dir.join(artifact).exists(), "missing {artifact}");
    }
    // Report embeds the config hash and seed.
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert!(!report["config_hash"].as_str().unwrap().is_empty());
    assert!(report["seed"].is_u64());

    let dump = dir.path().join("blocks.csv");
    let out = msdcn(
        &[
            "dump",
            "--window",
            "0",
            "--channel",
            "1",
            "--lookback",
            "48",
            "--horizon",
            "24",
            "--data",
        ],
        &[
            &csv,
            Path::new("--checkpoint"),
            &out_dir.join("model.ckpt"),
            Path::new("--out"),
            &dump,
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&dump).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# suppressed:"));
    // time index + one column per block (default n + m = 8).
    assert_eq!(lines.next().unwrap().split(',').count(), 9);

    // Out-of-range channel errors.
    let out = msdcn(
        &[
            "dump",
            "--channel",
            "99",
            "--lookback",
            "48",
            "--horizon",
            "24",
            "--data",
        ],
        &[
            &csv,
            Path::new("--checkpoint"),
            &out_dir.join("model.ckpt"),
            Path::new("--out"),
            &dump,
        ],
    );
    assert!(!out.status.success());
}

#[test]
fn ablate_conv_grid_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 600, 2);
    let out_dir = dir.path().join("run");
    let out = msdcn(
        &[
            "ablate",
            "--grid",
            "conv",
            "--lookback",
            "48",
            "--horizon",
            "24",
            "--max-epochs",
            "1",
            "--data",
        ],
        &[&csv, Path::new("--out-dir"), &out_dir],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let jsonl = std::fs::read_to_string(out_dir.join("ablation.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 4);
    let table = std::fs::read_to_string(out_dir.join("ablation.txt")).unwrap();
    assert!(table.contains('\u{2713}')); // the check-mark rows

    let out = msdcn(&["ablate", "--grid", "bogus", "--data"], &[&csv]);
    assert!(!out.status.success());
}

#[test]
fn profile_reports_preset_counts() {
    let out = msdcn(
        &["profile", "--model-preset", "dlinear", "--repetitions", "3"],
        &[],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("139680"), "{stdout}");

    let out = msdcn(
        &["profile", "--model-preset", "ar-only", "--horizon", "720", "--repetitions", "3"],
        &[],
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("69840"), "{stdout}");
}

#[test]
fn config_file_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synth_csv(dir.path(), 600, 2);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "lookback = 48\nhorizon = 24\nmax_epochs = 1\nseed = 5\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = msdcn(
        &["train", "--seed", "6", "--config"],
        &[
            &cfg,
            Path::new("--data"),
            &csv,
            Path::new("--out-dir"),
            &out_dir,
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["seed"].as_u64(), Some(6)); // flag wins over file
    assert_eq!(report["horizon"].as_u64(), Some(24)); // file wins over default
}
