use super::{byte_lut, Dataset, DatasetError};
use crate::scalar::Scalar;
use crate::tensor::{Image, LabeledSample};

const PIXELS: usize = 3 * 32 * 32;
pub const CIFAR10_RECORD: usize = 1 + PIXELS;
pub const CIFAR100_RECORD: usize = 2 + PIXELS;

/// Records of one label byte followed by 1024 R, 1024 G, 1024 B bytes.
pub fn parse_cifar10<T: Scalar>(bytes: &[u8]) -> Result<Dataset<T>, DatasetError> {
    parse_records(bytes, CIFAR10_RECORD, 0, 10, "cifar10")
}

/// Records of coarse label, fine label, then pixels; the fine label is kept.
pub fn parse_cifar100<T: Scalar>(bytes: &[u8]) -> Result<Dataset<T>, DatasetError> {
    parse_records(bytes, CIFAR100_RECORD, 1, 100, "cifar100")
}

fn parse_records<T: Scalar>(
    bytes: &[u8],
    record: usize,
    label_offset: usize,
    classes: usize,
    name: &str,
) -> Result<Dataset<T>, DatasetError> {
    if bytes.len() % record != 0 {
        return Err(DatasetError::Truncated { len: bytes.len(), record });
    }
    let lut = byte_lut::<T>();
    let header = record - PIXELS;
    let samples = bytes
        .chunks_exact(record)
        .enumerate()
        .map(|(index, rec)| {
            let label = rec[label_offset];
            if label as usize >= classes {
                return Err(DatasetError::CorruptRecord { index, label });
            }
            let data = rec[header..].iter().map(|&b| lut[b as usize]).collect();
            Ok(LabeledSample::new(Image::from_parts(3, 32, 32, data), label as usize))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(name, (3, 32, 32), classes, samples)
}
