//! Deterministic parallel batch loader.
//!
//! Workers claim batch indices in ascending order, but only after taking one
//! of `queue_capacity` permits; a permit is returned when the consumer
//! receives that batch. At most `queue_capacity` batches are therefore
//! being built or waiting at any moment, and the batch the consumer needs
//! next always holds a permit. Randomness comes from per-sample streams, so
//! the emitted sequence does not depend on `worker_count`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use super::{apply_chain, PipelineError, TransformChain};
use crate::augment::rng::{tags, RngStream};
use crate::datasets::Dataset;
use crate::scalar::Scalar;
use crate::tensor::{batch_from_samples, Tensor4};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoaderConfig {
    pub batch_size: usize,
    pub shuffle_seed: u64,
    /// Seed for the per-sample augmentation streams.
    pub augment_seed: u64,
    pub worker_count: usize,
    pub queue_capacity: usize,
    pub drop_last: bool,
}

impl Default for LoaderConfig {
    fn default() -> Self {
        Self { batch_size: 128, shuffle_seed: 0, augment_seed: 0, worker_count: 1, queue_capacity: 4, drop_last: false }
    }
}

impl LoaderConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.batch_size == 0 {
            return Err(PipelineError::Config("batch_size must be at least 1".into()));
        }
        if self.worker_count == 0 {
            return Err(PipelineError::Config("worker_count must be at least 1".into()));
        }
        if self.queue_capacity == 0 {
            return Err(PipelineError::Config("queue_capacity must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T = f32> {
    /// Position of this batch within the epoch.
    pub index: usize,
    pub images: Tensor4<T>,
    pub labels: Vec<usize>,
    /// Dataset indices of the samples, in batch order.
    pub sample_indices: Vec<usize>,
}

/// Visiting order for one epoch: a seeded permutation of `0..n`.
pub fn epoch_order(n: usize, shuffle_seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::derive_tagged(tags::SHUFFLE, shuffle_seed, epoch, 0).shuffle(&mut order);
    order
}

pub fn batch_count(n: usize, batch_size: usize, drop_last: bool) -> usize {
    if drop_last {
        n / batch_size
    } else {
        n.div_ceil(batch_size)
    }
}

struct GateState {
    permits: usize,
    next_job: usize,
    cancelled: bool,
}

struct Gate {
    state: Mutex<GateState>,
    cv: Condvar,
    capacity: usize,
    high_water: AtomicUsize,
}

impl Gate {
    /// Blocks for a permit and claims the next batch index.
    fn claim(&self, total: usize) -> Option<usize> {
        let mut st = self.state.lock().unwrap();
        loop {
            if st.cancelled || st.next_job >= total {
                return None;
            }
            if st.permits > 0 {
                st.permits -= 1;
                let job = st.next_job;
                st.next_job += 1;
                self.high_water.fetch_max(self.capacity - st.permits, Ordering::Relaxed);
                return Some(job);
            }
            st = self.cv.wait(st).unwrap();
        }
    }

    fn release(&self) {
        let mut st = self.state.lock().unwrap();
        st.permits += 1;
        self.cv.notify_all();
    }

    fn cancel(&self) {
        let mut st = self.state.lock().unwrap();
        st.cancelled = true;
        self.cv.notify_all();
    }
}

struct EpochPlan<T> {
    ds: Arc<Dataset<T>>,
    chain: Arc<TransformChain<T>>,
    order: Vec<usize>,
    batch_size: usize,
    epoch: u64,
    augment_seed: u64,
}

impl<T: Scalar> EpochPlan<T> {
    fn build(&self, index: usize) -> Result<Batch<T>, PipelineError> {
        let start = index * self.batch_size;
        let end = (start + self.batch_size).min(self.order.len());
        let sample_indices = self.order[start..end].to_vec();
        let samples = sample_indices
            .iter()
            .map(|&i| apply_chain(&self.ds.samples()[i], &self.chain, self.epoch, i as u64, self.augment_seed))
            .collect::<Result<Vec<_>, _>>()?;
        let (images, labels) = batch_from_samples(&samples)
            .map_err(|e| PipelineError::Chain { stage: self.chain.stages().len(), name: "collate", message: e.to_string() })?;
        Ok(Batch { index, images, labels, sample_indices })
    }
}

type Msg<T> = (usize, Result<Batch<T>, PipelineError>);

/// Ordered stream of one epoch's batches. Dropping it stops the workers.
pub struct BatchStream<T: Scalar = f32> {
    gate: Arc<Gate>,
    rx: Receiver<Msg<T>>,
    pending: BTreeMap<usize, Result<Batch<T>, PipelineError>>,
    next: usize,
    total: usize,
    failed: bool,
    workers: Vec<JoinHandle<()>>,
}

impl<T: Scalar> BatchStream<T> {
    pub fn total_batches(&self) -> usize {
        self.total
    }

    pub fn capacity(&self) -> usize {
        self.gate.capacity
    }

    /// Largest number of batches simultaneously claimed but not yet consumed.
    pub fn max_in_flight(&self) -> usize {
        self.gate.high_water.load(Ordering::Relaxed)
    }
}

impl<T: Scalar> Iterator for BatchStream<T> {
    type Item = Result<Batch<T>, PipelineError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.next >= self.total {
            return None;
        }
        let item = loop {
            if let Some(item) = self.pending.remove(&self.next) {
                break item;
            }
            match self.rx.recv() {
                Ok((i, item)) => {
                    self.pending.insert(i, item);
                }
                Err(_) => break Err(PipelineError::WorkerLost),
            }
        };
        self.next += 1;
        self.gate.release();
        if item.is_err() {
            self.failed = true;
            self.gate.cancel();
        }
        Some(item)
    }
}

impl<T: Scalar> Drop for BatchStream<T> {
    fn drop(&mut self) {
        self.gate.cancel();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Starts loading one epoch. Batches arrive in shuffled order, with the
/// last partial batch kept unless `drop_last`.
pub fn epoch_batches<T: Scalar>(
    ds: Arc<Dataset<T>>,
    chain: Arc<TransformChain<T>>,
    cfg: &LoaderConfig,
    epoch: u64,
) -> Result<BatchStream<T>, PipelineError> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    chain.output_shape(ds.shape())?;
    let total = batch_count(ds.len(), cfg.batch_size, cfg.drop_last);
    let plan = Arc::new(EpochPlan {
        order: epoch_order(ds.len(), cfg.shuffle_seed, epoch),
        ds,
        chain,
        batch_size: cfg.batch_size,
        epoch,
        augment_seed: cfg.augment_seed,
    });
    let gate = Arc::new(Gate {
        state: Mutex::new(GateState { permits: cfg.queue_capacity, next_job: 0, cancelled: false }),
        cv: Condvar::new(),
        capacity: cfg.queue_capacity,
        high_water: AtomicUsize::new(0),
    });
    let (tx, rx) = mpsc::channel();
    let workers = (0..cfg.worker_count.min(total.max(1)))
        .map(|_| {
            let (plan, gate, tx): (_, _, Sender<Msg<T>>) = (plan.clone(), gate.clone(), tx.clone());
            std::thread::spawn(move || {
                while let Some(job) = gate.claim(total) {
                    if tx.send((job, plan.build(job))).is_err() {
                        break;
                    }
                }
            })
        })
        .collect();
    Ok(BatchStream { gate, rx, pending: BTreeMap::new(), next: 0, total, failed: false, workers })
}
