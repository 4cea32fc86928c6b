//! Desk-scale convolutional network, optimizer, schedule and trainer.

mod checkpoint;
pub mod layers;
mod net;
mod optim;
mod schedule;
mod train;

use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC};
pub use net::{Architecture, ForwardOutput, Grads, Probe, SmallCnn, PARAM_NAMES};
pub use optim::{momentum_update, sgd_nesterov_step, OptimizerState};
pub use schedule::{lr_at_epoch, TrainConfig};
pub use train::{evaluate, train, train_with, EpochRecord, TrainError, TrainReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("non-finite loss (first non-finite output at {layer})")]
    NonFinite { layer: String },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
