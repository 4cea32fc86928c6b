use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::data::{augment_chain, load, load_eval};
use super::{input_err, parse_list, AnalyzeArgs, Cli, CliError, GridArgs, PreviewArgs, RunManifest, ThroughputArgs, TrainArgs};
use crate::analysis::{compare_profiles, profile_dataset};
use crate::augment::ppm::write_ppm;
use crate::augment::{normalize_dataset, CutoutParams};
use crate::datasets::{compute_stats, DatasetStats};
use crate::gridsearch::{normalized_split, run_grid, GridSetup};
use crate::pipeline::{apply_chain, throughput_probe, LoaderConfig, Transform, TransformChain};
use crate::smallnet::{decode_checkpoint, encode_checkpoint, train_with, Architecture, SmallCnn, TrainError};

fn write(path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
    fs::write(&path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn to_json<S: serde::Serialize>(v: &S) -> serde_json::Value {
    serde_json::to_value(v).expect("arguments serialize")
}

fn finish(cli: &Cli, argv: &[String], config: serde_json::Value, artifacts: Vec<PathBuf>) -> Result<RunManifest, CliError> {
    let manifest = RunManifest::new(cli, argv, config, artifacts);
    manifest.write(&cli.out_dir)?;
    Ok(manifest)
}

pub fn preview(cli: &Cli, a: &PreviewArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let ds = load(&a.data)?;
    let stats = compute_stats(&ds).map_err(input_err)?;
    let plain = TransformChain::new(vec![Transform::Normalize(stats.clone())]);
    let params = CutoutParams::new(a.cutout.cutout_length, a.cutout.cutout_mode.into());
    let masked = plain.clone().with(Transform::Cutout(params));
    let mut artifacts = Vec::new();
    for (i, sample) in ds.samples().iter().take(a.count).enumerate() {
        for (tag, chain) in [("original", &plain), ("cutout", &masked)] {
            let out = apply_chain(sample, chain, 0, i as u64, cli.seed).map_err(input_err)?;
            let path = cli.out_dir.join(format!("preview_{i:03}_{tag}.ppm"));
            write_ppm(&path, &out.image, &stats).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            artifacts.push(path);
        }
    }
    println!("wrote {} images to {}", artifacts.len(), cli.out_dir.display());
    finish(cli, argv, to_json(a), artifacts)
}

pub fn train(cli: &Cli, a: &TrainArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let cfg = a.train.resolve(cli.seed, cli.workers)?;
    let ds = load(&a.data)?;
    let (train_ds, eval_ds, stats) = if a.eval_path.is_empty() {
        normalized_split(&ds, a.val_fraction, cli.seed).map_err(input_err)?
    } else {
        let eval = load_eval(&a.data, &a.eval_path, a.eval_labels_path.as_deref())?;
        let stats = compute_stats(&ds).map_err(input_err)?;
        (normalize_dataset(&ds, &stats).map_err(input_err)?, normalize_dataset(&eval, &stats).map_err(input_err)?, stats)
    };
    let chain = augment_chain(&a.augment, Some(&a.cutout), ds.shape());
    let (c, h, w) = chain.output_shape(ds.shape()).map_err(input_err)?;
    let arch = Architecture::desk(c, h, w, ds.class_count(), a.train.dropout);
    let mut net = SmallCnn::<f32>::init(arch, cli.seed).map_err(input_err)?;

    let csv_path = cli.out_dir.join("train.csv");
    let stats_path = write(cli.out_dir.join("stats.json"), serde_json::to_string_pretty(&stats).expect("stats serialize"))?;
    let config = serde_json::json!({ "args": to_json(a), "train": to_json(&cfg), "architecture": to_json(&arch) });
    let mut last = None;
    let result = train_with(&mut net, Arc::new(train_ds), Arc::new(chain), &cfg, &eval_ds, |r| {
        println!("epoch {:>4}  lr {:.6}  loss {:.4}  train {:.4}  eval {:.4}", r.epoch, r.lr, r.train_loss, r.train_acc, r.eval_acc);
        last = Some(r.eval_acc);
    });
    match result {
        Ok(report) => {
            let csv = write(csv_path, report.to_csv())?;
            let ckpt = write(cli.out_dir.join("model.ckpt"), encode_checkpoint(&net))?;
            if let Some(acc) = last {
                println!("final eval accuracy {acc:.4}");
            }
            finish(cli, argv, config, vec![csv, ckpt, stats_path])
        }
        Err(TrainError::Diverged { epoch, layer, partial }) => {
            let csv = write(csv_path, partial.to_csv())?;
            finish(cli, argv, config, vec![csv.clone(), stats_path])?;
            Err(CliError::Diverged { epoch, layer, csv })
        }
        Err(e) => Err(input_err(e)),
    }
}

pub fn gridsearch(cli: &Cli, a: &GridArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let lengths = parse_list(&a.lengths, "lengths")?;
    let cfg = a.train.resolve(cli.seed, 1)?;
    let ds = load(&a.data)?;
    let mut setup = GridSetup::new(augment_chain(&a.augment, None, ds.shape()), cfg.clone());
    setup.mode = a.cutout_mode.into();
    setup.dropout = a.train.dropout;
    let report = run_grid(&ds, &lengths, a.runs, &setup).map_err(input_err)?;
    let runs = write(cli.out_dir.join("grid_runs.csv"), report.runs_csv())?;
    let summary = write(cli.out_dir.join("grid_summary.csv"), report.summary_csv())?;
    for row in &report.rows {
        let mean = row.mean.map_or("failed".to_string(), |m| format!("{m:.4}"));
        println!("length {:>3}  mean {mean}  ci ±{:.4}  runs {}", row.length, row.ci_half_width, row.accuracies.len());
    }
    match report.selected {
        Some(l) => println!("selected length: {l}"),
        None => println!("selected length: none (every run failed)"),
    }
    let config = serde_json::json!({ "args": to_json(a), "train": to_json(&cfg), "lengths": lengths });
    finish(cli, argv, config, vec![runs, summary])
}

fn read_checkpoint(path: &Path) -> Result<SmallCnn<f32>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    decode_checkpoint(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn analyze(cli: &Cli, a: &AnalyzeArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let probes = a.probes()?;
    let net_a = read_checkpoint(&a.checkpoint_a)?;
    let net_b = read_checkpoint(&a.checkpoint_b)?;
    let ds = load(&a.data)?;
    for net in [&net_a, &net_b] {
        if net.arch.input_shape() != ds.shape() {
            return Err(CliError::Input(format!(
                "checkpoint expects {:?} inputs, dataset is {:?}",
                net.arch.input_shape(),
                ds.shape()
            )));
        }
    }
    let stats: DatasetStats = match &a.stats {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => compute_stats(&ds).map_err(input_err)?,
    };
    let ds = normalize_dataset(&ds, &stats).map_err(input_err)?;
    let mut artifacts = Vec::new();
    let mut comparisons = Vec::new();
    for probe in probes {
        let pa = profile_dataset(&net_a, &ds, probe).map_err(input_err)?;
        let pb = profile_dataset(&net_b, &ds, probe).map_err(input_err)?;
        artifacts.push(write(cli.out_dir.join(format!("profile_a_{probe}.csv")), pa.to_csv())?);
        artifacts.push(write(cli.out_dir.join(format!("profile_b_{probe}.csv")), pb.to_csv())?);
        let cmp = compare_profiles(&pa, &pb).map_err(input_err)?;
        println!("{}", cmp.to_json());
        comparisons.push(cmp);
    }
    artifacts.push(write(
        cli.out_dir.join("comparison.json"),
        serde_json::to_string_pretty(&comparisons).expect("comparisons serialize") + "\n",
    )?);
    finish(cli, argv, to_json(a), artifacts)
}

pub fn throughput(cli: &Cli, a: &ThroughputArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let ds = load(&a.data)?;
    let stats = compute_stats(&ds).map_err(input_err)?;
    let mut stages = vec![Transform::Normalize(stats)];
    stages.extend(augment_chain(&a.augment, Some(&a.cutout), ds.shape()).stages().iter().cloned());
    let cfg = LoaderConfig {
        batch_size: a.batch_size,
        shuffle_seed: cli.seed,
        augment_seed: cli.seed,
        worker_count: cli.workers,
        queue_capacity: 2 * cli.workers.max(2),
        drop_last: false,
    };
    let report = throughput_probe(Arc::new(ds), Arc::new(TransformChain::new(stages)), &cfg).map_err(input_err)?;
    let line = report.to_json_line();
    println!("{line}");
    let path = write(cli.out_dir.join("throughput.json"), line + "\n")?;
    finish(cli, argv, to_json(a), vec![path])
}
