//! The `cutout` binary: outputs, exit codes and manifests.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cutout::smallnet::{encode_checkpoint, Architecture, SmallCnn};

fn cutout(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutout"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

const SYNTH: [&str; 4] = ["--dataset", "synthetic", "--synthetic-samples", "120"];

fn with_synth<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(SYNTH);
    v.extend(extra);
    v
}

fn ppm_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".ppm"))
        .collect();
    names.sort();
    names
}

#[test]
fn preview_writes_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = cutout(dir.path(), &with_synth("preview", &["--cutout-length", "8", "--count", "4"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names = ppm_files(dir.path());
    assert_eq!(names.len(), 8);
    assert!(dir.path().join("manifest.json").exists());
    let a = fs::read(dir.path().join("preview_000_original.ppm")).unwrap();
    let b = fs::read(dir.path().join("preview_000_cutout.ppm")).unwrap();
    assert!(a.starts_with(b"P6\n16 16\n255\n"));
    assert_ne!(a, b);

    let again = tempfile::tempdir().unwrap();
    cutout(again.path(), &with_synth("preview", &["--cutout-length", "8", "--count", "4"]));
    for n in &names {
        assert_eq!(fs::read(dir.path().join(n)).unwrap(), fs::read(again.path().join(n)).unwrap(), "{n}");
    }
}

#[test]
fn preview_length_zero_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = cutout(dir.path(), &with_synth("preview", &["--cutout-length", "0", "--count", "3"]));
    assert!(out.status.success());
    for i in 0..3 {
        let a = fs::read(dir.path().join(format!("preview_{i:03}_original.ppm"))).unwrap();
        let b = fs::read(dir.path().join(format!("preview_{i:03}_cutout.ppm"))).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn train_with_zero_rate_saves_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let out = cutout(dir.path(), &with_synth("train", &["--epochs", "1", "--lr0", "0", "--batch-size", "32", "--seed", "7"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let init = SmallCnn::<f32>::init(Architecture::desk(3, 16, 16, 10, 0.0), 7).unwrap();
    assert_eq!(fs::read(dir.path().join("model.ckpt")).unwrap(), encode_checkpoint(&init));
    let csv = fs::read_to_string(dir.path().join("train.csv")).unwrap();
    assert!(csv.starts_with("epoch,lr,train_loss,train_acc,eval_acc\n"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["train"]["lr0"], 0.0);
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 3);
}

#[test]
fn train_with_and_without_cutout() {
    for len in ["0", "8"] {
        let dir = tempfile::tempdir().unwrap();
        let out = cutout(dir.path(), &with_synth("train", &["--epochs", "2", "--lr0", "0.01", "--cutout-length", len]));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = fs::read_to_string(dir.path().join("train.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = cutout(dir.path(), &["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let missing = dir.path().join("nope.bin");
    let out = cutout(dir.path(), &["train", "--dataset", "cifar10", "--data-path", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let junk = dir.path().join("junk.bin");
    fs::write(&junk, [0u8; 100]).unwrap();
    let out = cutout(dir.path(), &["preview", "--dataset", "cifar10", "--data-path", junk.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = cutout(dir.path(), &with_synth("train", &["--factor", "0.5"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_3_and_keeps_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = cutout(dir.path(), &with_synth("train", &["--epochs", "3", "--lr0", "1e12", "--momentum", "0"]));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("train.csv")).unwrap();
    assert!(csv.starts_with("epoch,"));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn gridsearch_rows_and_determinism() {
    let args = with_synth(
        "gridsearch",
        &["--lengths", "0,4,8,12,16", "--runs", "5", "--epochs", "1", "--lr0", "0.01", "--batch-size", "32"],
    );
    let a = tempfile::tempdir().unwrap();
    let out = cutout(a.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("selected length: "));
    let summary = fs::read_to_string(a.path().join("grid_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
    assert_eq!(fs::read_to_string(a.path().join("grid_runs.csv")).unwrap().lines().count(), 26);

    let b = tempfile::tempdir().unwrap();
    cutout(b.path(), &args);
    for f in ["grid_summary.csv", "grid_runs.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn gridsearch_single_run_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = cutout(dir.path(), &with_synth("gridsearch", &["--lengths", "0,8", "--runs", "1", "--epochs", "1"]));
    assert!(out.status.success());
    let summary = fs::read_to_string(dir.path().join("grid_summary.csv")).unwrap();
    for line in summary.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[2], "0");
        assert_eq!(cols[4], "single_run");
    }
}

#[test]
fn analyze_same_checkpoint_twice() {
    let dir = tempfile::tempdir().unwrap();
    let out = cutout(dir.path(), &with_synth("train", &["--epochs", "1", "--lr0", "0.01"]));
    assert!(out.status.success());
    let ckpt = dir.path().join("model.ckpt");
    let stats = dir.path().join("stats.json");
    let adir = dir.path().join("analysis");
    let c = ckpt.to_str().unwrap();
    let out = cutout(
        &adir,
        &with_synth("analyze", &["--checkpoint-a", c, "--checkpoint-b", c, "--stats", stats.to_str().unwrap()]),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cmp: serde_json::Value = serde_json::from_slice(&fs::read(adir.join("comparison.json")).unwrap()).unwrap();
    let rows = cmp.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r["head_ratio"], 1.0);
        assert_eq!(r["tail_ratio"], 1.0);
    }
    for layer in ["relu1", "relu2", "logits"] {
        let csv = fs::read_to_string(adir.join(format!("profile_a_{layer}.csv"))).unwrap();
        let mags: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(!mags.is_empty());
        assert!(mags.windows(2).all(|w| w[0] >= w[1]), "{layer}");
    }

    let missing = dir.path().join("absent.ckpt");
    let out = cutout(&adir, &with_synth("analyze", &["--checkpoint-a", c, "--checkpoint-b", missing.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn throughput_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = cutout(dir.path(), &with_synth("throughput", &["--cutout-length", "8", "--workers", "2", "--batch-size", "16"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("throughput.json")).unwrap()).unwrap();
    assert_eq!(v["workers"], 2);
    assert!(v["samples_per_sec"].as_f64().unwrap() > 0.0);
    assert!(v["speedup"].as_f64().unwrap() > 0.0);
}

#[test]
fn replay_reproduces_training_outputs() {
    let first = tempfile::tempdir().unwrap();
    let out = cutout(first.path(), &with_synth("train", &["--epochs", "2", "--lr0", "0.01", "--cutout-length", "6", "--seed", "3"]));
    assert!(out.status.success());
    let second = tempfile::tempdir().unwrap();
    let manifest = first.path().join("manifest.json");
    let out = cutout(second.path(), &["replay", manifest.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["train.csv", "model.ckpt", "stats.json"] {
        assert_eq!(fs::read(first.path().join(f)).unwrap(), fs::read(second.path().join(f)).unwrap(), "{f}");
    }
}
