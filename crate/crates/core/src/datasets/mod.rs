//! Labeled image datasets: binary parsers, the raw container, statistics
//! and the train/validation split.

mod cifar;
mod raw;
mod stats;
mod stl10;
pub mod synthetic;

use thiserror::Error;

use crate::augment::rng::{tags, RngStream};
use crate::scalar::Scalar;
use crate::tensor::{Image, LabeledSample};

pub use cifar::{parse_cifar10, parse_cifar100, CIFAR100_RECORD, CIFAR10_RECORD};
pub use raw::{parse_raw, write_raw, RAW_HEADER_LEN, RAW_MAGIC};
pub(crate) use raw::quantize_pixel;
pub use stats::{compute_stats, DatasetStats};
pub use synthetic::{occlusion_dataset, SyntheticConfig};
pub use stl10::{parse_stl10, STL10_IMAGE_BYTES, STL10_SIDE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("truncated input: {len} bytes is not a whole number of {record}-byte records")]
    Truncated { len: usize, record: usize },
    #[error("corrupt record {index}: label byte {label} outside the valid range")]
    CorruptRecord { index: usize, label: u8 },
    #[error("{images} images but {labels} labels")]
    Pairing { images: usize, labels: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error("dataset is empty")]
    Empty,
    #[error("channel {0} has zero standard deviation")]
    DegenerateChannel(usize),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("sample {index} has shape {got:?}, dataset shape is {expected:?}")]
    Shape {
        index: usize,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("sample {index} has label {label} but the dataset has {class_count} classes")]
    Label { index: usize, label: usize, class_count: usize },
}

/// Samples sharing one image shape, with labels below `class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T = f32> {
    samples: Vec<LabeledSample<T>>,
    shape: (usize, usize, usize),
    class_count: usize,
    name: String,
}

impl<T: Scalar> Dataset<T> {
    /// `shape` is `(channels, height, width)`; it is kept even when the
    /// dataset is empty so the raw container can round-trip.
    pub fn new(
        name: impl Into<String>,
        shape: (usize, usize, usize),
        class_count: usize,
        samples: Vec<LabeledSample<T>>,
    ) -> Result<Self, DatasetError> {
        for (index, s) in samples.iter().enumerate() {
            if s.image.shape() != shape {
                return Err(DatasetError::Shape { index, expected: shape, got: s.image.shape() });
            }
            if s.label >= class_count {
                return Err(DatasetError::Label { index, label: s.label, class_count });
            }
        }
        Ok(Self { samples, shape, class_count, name: name.into() })
    }

    /// Infers the shape from the first sample.
    pub fn from_samples(
        name: impl Into<String>,
        class_count: usize,
        samples: Vec<LabeledSample<T>>,
    ) -> Result<Self, DatasetError> {
        let shape = samples.first().ok_or(DatasetError::Empty)?.image.shape();
        Self::new(name, shape, class_count, samples)
    }

    pub fn samples(&self) -> &[LabeledSample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn into_samples(self) -> Vec<LabeledSample<T>> {
        self.samples
    }

    /// New dataset holding the given indices, in the given order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            shape: self.shape,
            class_count: self.class_count,
            name: name.into(),
        }
    }

    /// First `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx, self.name.clone())
    }

    /// Applies a shape-preserving image transform to every sample.
    pub fn map_images<E>(&self, mut f: impl FnMut(&Image<T>) -> Result<Image<T>, E>) -> Result<Self, E> {
        let samples = self
            .samples
            .iter()
            .map(|s| Ok(LabeledSample::new(f(&s.image)?, s.label)))
            .collect::<Result<Vec<_>, E>>()?;
        let shape = samples.first().map_or(self.shape, |s| s.image.shape());
        Ok(Self { samples, shape, class_count: self.class_count, name: self.name.clone() })
    }
}

/// Seeded shuffle, then the first `round(n * val_fraction)` shuffled indices
/// form the validation set. Both parts keep the original relative order.
pub fn split_train_val<T: Scalar>(
    ds: &Dataset<T>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, Dataset<T>), DatasetError> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(DatasetError::Argument(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let n = ds.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::derive_tagged(tags::SPLIT, seed, 0, 0).shuffle(&mut order);
    let (val, train) = order.split_at_mut(n_val);
    val.sort_unstable();
    train.sort_unstable();
    Ok((ds.subset(train, format!("{}-train", ds.name)), ds.subset(val, format!("{}-val", ds.name))))
}

/// Pixel byte to `[0, 1]`.
pub(crate) fn byte_lut<T: Scalar>() -> [T; 256] {
    let scale = T::from_count(255);
    std::array::from_fn(|v| T::from_count(v) / scale)
}
