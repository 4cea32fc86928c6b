//! Transform chains and the deterministic parallel batch loader.

mod chain;
mod loader;
mod throughput;

use thiserror::Error;

pub use chain::{apply_chain, FeatureMapStore, Transform, TransformChain};
pub use loader::{batch_count, epoch_batches, epoch_order, Batch, BatchStream, LoaderConfig};
pub use throughput::{throughput_probe, ThroughputReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("stage {stage} ({name}): {message}")]
    Chain { stage: usize, name: &'static str, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid loader configuration: {0}")]
    Config(String),
    #[error("loader worker terminated unexpectedly")]
    WorkerLost,
}
