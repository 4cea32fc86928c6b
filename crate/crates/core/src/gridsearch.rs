//! Patch-length selection: repeated 90/10 trainings per candidate length,
//! summarized with normal-approximation 95% intervals.

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::augment::{normalize_dataset, AugmentError, CutoutMode, CutoutParams};
use crate::datasets::{compute_stats, split_train_val, Dataset, DatasetError, DatasetStats};
use crate::pipeline::{PipelineError, Transform, TransformChain};
use crate::scalar::Scalar;
use crate::smallnet::{train, Architecture, NetError, SmallCnn, TrainConfig, TrainError, TrainReport};

pub const Z_95: f64 = 1.96;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone)]
pub struct GridSetup<T = f32> {
    /// Applied before the cutout stage. Data reaching it is already
    /// normalized with statistics of the run's training portion.
    pub base_chain: TransformChain<T>,
    pub train: TrainConfig,
    pub mode: CutoutMode,
    pub dropout: f64,
    pub val_fraction: f64,
}

impl<T: Scalar> GridSetup<T> {
    pub fn new(base_chain: TransformChain<T>, train: TrainConfig) -> Self {
        Self { base_chain, train, mode: CutoutMode::AlwaysClipped, dropout: 0.0, val_fraction: 0.1 }
    }

    pub fn chain_for(&self, length: usize) -> TransformChain<T> {
        if length == 0 {
            self.base_chain.clone()
        } else {
            self.base_chain.clone().with(Transform::Cutout(CutoutParams::new(length, self.mode)))
        }
    }
}

/// Seed of run `r`; drives the split, the initialization and the loader.
pub fn run_seed(base: u64, run: usize) -> u64 {
    base.wrapping_add(run as u64)
}

/// Splits with `seed`, computes statistics on the training part only and
/// normalizes both parts with them.
pub fn normalized_split<T: Scalar>(
    ds: &Dataset<T>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>, DatasetStats), GridError> {
    let (tr, va) = split_train_val(ds, val_fraction, seed)?;
    let stats = compute_stats(&tr)?;
    Ok((normalize_dataset(&tr, &stats)?, normalize_dataset(&va, &stats)?, stats))
}

pub struct TrainedCell<T = f32> {
    pub length: usize,
    pub run: usize,
    pub net: SmallCnn<T>,
    pub report: TrainReport,
    pub train: Arc<Dataset<T>>,
    pub val: Dataset<T>,
}

impl<T: Scalar> TrainedCell<T> {
    pub fn val_acc(&self) -> f64 {
        self.report.last().map_or(0.0, |r| r.eval_acc)
    }
}

/// One (length, run) cell of the protocol, on a single loader thread.
pub fn train_cell<T: Scalar>(
    ds: &Dataset<T>,
    length: usize,
    run: usize,
    setup: &GridSetup<T>,
) -> Result<TrainedCell<T>, GridError> {
    let seed = run_seed(setup.train.seed, run);
    let (tr, va, _) = normalized_split(ds, setup.val_fraction, seed)?;
    let chain = setup.chain_for(length);
    let (c, h, w) = chain.output_shape(ds.shape())?;
    let arch = Architecture::desk(c, h, w, ds.class_count(), setup.dropout);
    let mut net = SmallCnn::init(arch, seed)?;
    let cfg = TrainConfig { seed, workers: 1, ..setup.train.clone() };
    let train_ds = Arc::new(tr);
    let report = train(&mut net, train_ds.clone(), Arc::new(chain), &cfg, &va)?;
    Ok(TrainedCell { length, run, net, report, train: train_ds, val: va })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub length: usize,
    pub run: usize,
    pub val_acc: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub length: usize,
    /// Successful runs only, in run order.
    pub accuracies: Vec<f64>,
    /// `None` when every run failed.
    pub mean: Option<f64>,
    pub ci_half_width: f64,
    pub failed_runs: usize,
    pub single_run: bool,
}

impl GridRow {
    pub fn from_accuracies(length: usize, accuracies: Vec<f64>, failed_runs: usize) -> Self {
        let (mean, ci_half_width) = mean_ci(&accuracies);
        Self { length, single_run: accuracies.len() == 1, accuracies, mean, ci_half_width, failed_runs }
    }

    fn flag(&self) -> String {
        let mut flags = Vec::new();
        if self.single_run {
            flags.push("single_run".to_string());
        }
        if self.failed_runs > 0 {
            flags.push(format!("failed_runs={}", self.failed_runs));
        }
        flags.join(";")
    }
}

/// Mean and `1.96 * s / sqrt(n)` with `s` the sample standard deviation;
/// the half-width is 0 for a single value.
pub fn mean_ci(values: &[f64]) -> (Option<f64>, f64) {
    let n = values.len();
    if n == 0 {
        return (None, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (Some(mean), 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Z_95 * var.sqrt() / (n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchReport {
    /// In the order the lengths were given.
    pub rows: Vec<GridRow>,
    pub runs: Vec<RunRecord>,
    pub selected: Option<usize>,
}

impl GridSearchReport {
    pub fn from_runs(lengths: &[usize], runs: Vec<RunRecord>) -> Self {
        let rows: Vec<GridRow> = lengths
            .iter()
            .map(|&l| {
                let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.length == l).collect();
                let accs = mine.iter().filter_map(|r| r.val_acc).collect();
                let failed = mine.iter().filter(|r| r.val_acc.is_none()).count();
                GridRow::from_accuracies(l, accs, failed)
            })
            .collect();
        let selected = select_length(&rows);
        Self { rows, runs, selected }
    }

    pub fn baseline(&self) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.length == 0)
    }

    /// `length,run,val_acc,status`; failed runs leave `val_acc` empty.
    pub fn runs_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["length", "run", "val_acc", "status"]).expect("in-memory write");
        for r in &self.runs {
            let acc = r.val_acc.map(|a| a.to_string()).unwrap_or_default();
            let status = r.failure.clone().unwrap_or_else(|| "ok".into());
            w.write_record([r.length.to_string(), r.run.to_string(), acc, status]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    /// `length,mean,ci_half_width,runs,flag`
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["length", "mean", "ci_half_width", "runs", "flag"]).expect("in-memory write");
        for r in &self.rows {
            let mean = r.mean.map(|m| m.to_string()).unwrap_or_default();
            w.write_record([r.length.to_string(), mean, r.ci_half_width.to_string(), r.accuracies.len().to_string(), r.flag()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

/// Arg-max over `(length, mean)` pairs; ties go to the smaller length.
pub fn select_from_means(means: &[(usize, f64)]) -> Option<usize> {
    means
        .iter()
        .copied()
        .reduce(|best, cand| if cand.1 > best.1 || (cand.1 == best.1 && cand.0 < best.0) { cand } else { best })
        .map(|(l, _)| l)
}

/// Rows whose runs all failed take no part.
pub fn select_length(rows: &[GridRow]) -> Option<usize> {
    let means: Vec<(usize, f64)> = rows.iter().filter_map(|r| r.mean.map(|m| (r.length, m))).collect();
    select_from_means(&means)
}

/// Every (length, run) cell trains independently and the cells run in
/// parallel. A diverged run is recorded as failed; any other error aborts.
pub fn run_grid<T: Scalar>(
    ds: &Dataset<T>,
    lengths: &[usize],
    runs_per_length: usize,
    setup: &GridSetup<T>,
) -> Result<GridSearchReport, GridError> {
    if lengths.is_empty() {
        return Err(GridError::Argument("no cutout lengths given".into()));
    }
    if runs_per_length == 0 {
        return Err(GridError::Argument("runs_per_length must be at least 1".into()));
    }
    if lengths.iter().collect::<HashSet<_>>().len() != lengths.len() {
        return Err(GridError::Argument(format!("duplicate lengths in {lengths:?}")));
    }
    let cells: Vec<(usize, usize)> = lengths.iter().flat_map(|&l| (0..runs_per_length).map(move |r| (l, r))).collect();
    let records = cells
        .par_iter()
        .map(|&(length, run)| match train_cell(ds, length, run, setup) {
            Ok(cell) => Ok(RunRecord { length, run, val_acc: Some(cell.val_acc()), failure: None }),
            Err(GridError::Train(e @ TrainError::Diverged { .. })) => {
                Ok(RunRecord { length, run, val_acc: None, failure: Some(e.to_string()) })
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GridSearchReport::from_runs(lengths, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(length: usize, mean: f64) -> GridRow {
        GridRow::from_accuracies(length, vec![mean], 0)
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_length(&[row(0, 0.80), row(8, 0.85), row(16, 0.83)]), Some(8));
        assert_eq!(select_length(&[row(16, 0.5), row(0, 0.5), row(8, 0.5)]), Some(0));
        assert_eq!(select_length(&[row(12, 0.1)]), Some(12));
        assert_eq!(select_length(&[]), None);
    }

    #[test]
    fn interval_uses_sample_deviation() {
        let (mean, half) = mean_ci(&[0.90, 0.92, 0.94]);
        assert!((mean.unwrap() - 0.92).abs() < 1e-12);
        // s = 0.02, n = 3
        assert!((half - 1.96 * 0.02 / 3f64.sqrt()).abs() < 1e-12);
        let single = GridRow::from_accuracies(4, vec![0.7], 0);
        assert_eq!(single.ci_half_width, 0.0);
        assert!(single.single_run);
        assert_eq!(mean_ci(&[]), (None, 0.0));
    }

    #[test]
    fn failed_runs_are_excluded_and_flagged() {
        let runs = vec![
            RunRecord { length: 8, run: 0, val_acc: Some(0.6), failure: None },
            RunRecord { length: 8, run: 1, val_acc: None, failure: Some("diverged".into()) },
            RunRecord { length: 8, run: 2, val_acc: Some(0.8), failure: None },
            RunRecord { length: 0, run: 0, val_acc: None, failure: Some("diverged".into()) },
        ];
        let rep = GridSearchReport::from_runs(&[0, 8], runs);
        assert_eq!(rep.rows[1].accuracies, vec![0.6, 0.8]);
        assert_eq!(rep.rows[1].failed_runs, 1);
        assert_eq!(rep.rows[0].mean, None);
        assert_eq!(rep.selected, Some(8));
        assert!(rep.summary_csv().contains("8,0.7,"));
        assert!(rep.summary_csv().contains("failed_runs=1"));
        assert!(rep.runs_csv().starts_with("length,run,val_acc,status\n"));
        assert!(rep.runs_csv().contains("8,1,,diverged"));
    }

    #[test]
    fn argument_errors() {
        let ds = Dataset::<f32>::new("e", (1, 4, 4), 2, vec![]).unwrap();
        let setup = GridSetup::new(TransformChain::empty(), TrainConfig::cifar());
        assert!(matches!(run_grid(&ds, &[], 1, &setup), Err(GridError::Argument(_))));
        assert!(matches!(run_grid(&ds, &[0], 0, &setup), Err(GridError::Argument(_))));
        assert!(matches!(run_grid(&ds, &[4, 4], 1, &setup), Err(GridError::Argument(_))));
    }

    proptest! {
        #[test]
        fn selection_survives_positive_affine_maps(
            means in prop::collection::vec(0.0f64..1.0, 1..8),
            scale in 0.01f64..100.0,
            shift in -10.0f64..10.0,
        ) {
            // coarse grid so that ties actually occur
            let pairs: Vec<(usize, f64)> = means.iter().enumerate().map(|(i, m)| (4 * i, (m * 8.0).round() / 8.0)).collect();
            let scaled: Vec<(usize, f64)> = pairs.iter().map(|&(l, m)| (l, m * scale + shift)).collect();
            let pick = select_from_means(&pairs);
            let expect = pairs.iter().fold(pairs[0], |b, &c| if c.1 > b.1 { c } else { b }).0;
            prop_assert_eq!(pick, Some(expect));
            // scaling can merge values that differ by an ulp, never the grid steps
            prop_assert_eq!(select_from_means(&scaled), pick);
        }

        #[test]
        fn rows_follow_length_order(perm_seed in any::<u64>(), accs in prop::collection::vec(0.0f64..1.0, 12)) {
            let lengths = [0usize, 4, 8, 12];
            let runs: Vec<RunRecord> = lengths
                .iter()
                .enumerate()
                .flat_map(|(i, &l)| (0..3).map(move |r| (i, l, r)))
                .map(|(i, l, r)| RunRecord { length: l, run: r, val_acc: Some(accs[i * 3 + r]), failure: None })
                .collect();
            let mut shuffled = lengths.to_vec();
            crate::augment::RngStream::from_seed(perm_seed).shuffle(&mut shuffled);
            let a = GridSearchReport::from_runs(&lengths, runs.clone());
            let b = GridSearchReport::from_runs(&shuffled, runs);
            for row in &b.rows {
                prop_assert_eq!(Some(row), a.rows.iter().find(|r| r.length == row.length));
            }
            prop_assert_eq!(a.selected, b.selected);
        }
    }
}
