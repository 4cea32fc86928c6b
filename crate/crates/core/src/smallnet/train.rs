use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::net::SmallCnn;
use super::optim::{sgd_nesterov_step, OptimizerState};
use super::schedule::{lr_at_epoch, TrainConfig};
use super::NetError;
use crate::augment::rng::{tags, RngStream};
use crate::datasets::Dataset;
use crate::pipeline::{epoch_batches, LoaderConfig, PipelineError, TransformChain};
use crate::scalar::Scalar;
use crate::tensor::{batch_from_samples, Tensor4};

/// One CSV row: `epoch,lr,train_loss,train_acc,eval_acc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean objective (cross-entropy plus decay) over the epoch's batches.
    pub train_loss: f64,
    /// Accuracy of the training-mode forward passes (augmentation and
    /// dropout active) over the epoch.
    pub train_acc: f64,
    pub eval_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.epochs {
            w.serialize(r).expect("in-memory CSV write");
        }
        // an empty report still gets its header
        if self.epochs.is_empty() {
            w.write_record(["epoch", "lr", "train_loss", "train_acc", "eval_acc"]).expect("in-memory CSV write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("CSV is UTF-8")
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged in epoch {epoch} at layer {layer}")]
    Diverged { epoch: usize, layer: String, partial: TrainReport },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

fn correct<T: Scalar>(logits: &Tensor4<T>, labels: &[usize]) -> usize {
    (0..logits.n()).filter(|&i| argmax(logits.sample_data(i)) == labels[i]).count()
}

/// Fraction of samples whose arg-max logit equals the label. Dropout is off
/// and no augmentation is applied; `ds` should already be normalized.
pub fn evaluate<T: Scalar>(net: &SmallCnn<T>, ds: &Dataset<T>, batch_size: usize) -> Result<f64, NetError> {
    if ds.is_empty() {
        return Err(NetError::Shape("cannot evaluate on an empty dataset".into()));
    }
    let hits = ds
        .samples()
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let (batch, labels) = batch_from_samples(chunk).map_err(|e| NetError::Shape(e.to_string()))?;
            Ok(correct(&net.predict(&batch)?, &labels))
        })
        .collect::<Result<Vec<usize>, NetError>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / ds.len() as f64)
}

pub fn train<T: Scalar>(
    net: &mut SmallCnn<T>,
    train_ds: Arc<Dataset<T>>,
    chain: Arc<TransformChain<T>>,
    cfg: &TrainConfig,
    eval_ds: &Dataset<T>,
) -> Result<TrainReport, TrainError> {
    train_with(net, train_ds, chain, cfg, eval_ds, |_| {})
}

/// Mini-batch SGD over `cfg.epochs` epochs; `on_epoch` sees each record as
/// soon as the epoch finishes. Batches are consumed in order on the calling
/// thread, so runs are reproducible for a fixed seed.
pub fn train_with<T: Scalar>(
    net: &mut SmallCnn<T>,
    train_ds: Arc<Dataset<T>>,
    chain: Arc<TransformChain<T>>,
    cfg: &TrainConfig,
    eval_ds: &Dataset<T>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if train_ds.is_empty() || eval_ds.is_empty() {
        return Err(PipelineError::EmptyDataset.into());
    }
    let out_shape = chain.output_shape(train_ds.shape())?;
    if out_shape != net.arch.input_shape() || eval_ds.shape() != net.arch.input_shape() {
        return Err(NetError::Shape(format!(
            "network expects {:?}; chain yields {out_shape:?}, eval set is {:?}",
            net.arch.input_shape(),
            eval_ds.shape()
        ))
        .into());
    }
    let loader = LoaderConfig {
        batch_size: cfg.batch_size,
        shuffle_seed: cfg.seed,
        augment_seed: cfg.seed,
        worker_count: cfg.workers,
        queue_capacity: 2 * cfg.workers.max(2),
        drop_last: false,
    };
    let mut state = OptimizerState::new(net);
    let momentum = T::from_f64_lossy(cfg.momentum);
    let decay = T::from_f64_lossy(cfg.weight_decay);
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch);
        let lr_t = T::from_f64_lossy(lr);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        let mut seen = 0usize;
        for batch in epoch_batches(train_ds.clone(), chain.clone(), &loader, epoch as u64)? {
            let batch = batch?;
            let mut rng = RngStream::derive_tagged(tags::DROPOUT, cfg.seed, epoch as u64, batch.index as u64);
            let (loss, grads, logits) = match net.loss_grads_logits(&batch.images, &batch.labels, decay, true, &mut rng) {
                Ok(v) => v,
                Err(NetError::NonFinite { layer }) => {
                    return Err(TrainError::Diverged { epoch, layer, partial: report });
                }
                Err(e) => return Err(e.into()),
            };
            hits += correct(&logits, &batch.labels);
            let n = batch.labels.len();
            loss_sum += loss.to_f64_lossy() * n as f64;
            seen += n;
            sgd_nesterov_step(net, &grads, &mut state, lr_t, momentum, cfg.nesterov)?;
        }
        if !net.all_finite() {
            return Err(TrainError::Diverged { epoch, layer: "parameters".into(), partial: report });
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            train_acc: hits as f64 / seen as f64,
            eval_acc: evaluate(net, eval_ds, 256)?,
        };
        on_epoch(&record);
        report.epochs.push(record);
    }
    Ok(report)
}
