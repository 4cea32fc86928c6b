use super::{byte_lut, Dataset, DatasetError};
use crate::scalar::Scalar;
use crate::tensor::{Image, LabeledSample};

pub const STL10_SIDE: usize = 96;
pub const STL10_IMAGE_BYTES: usize = 3 * STL10_SIDE * STL10_SIDE;

/// Images are stored column-major within each channel (byte `x*96 + y` of a
/// plane is pixel `(y, x)`); labels are one byte each in `1..=10`.
pub fn parse_stl10<T: Scalar>(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset<T>, DatasetError> {
    if image_bytes.len() % STL10_IMAGE_BYTES != 0 {
        return Err(DatasetError::Truncated { len: image_bytes.len(), record: STL10_IMAGE_BYTES });
    }
    let images = image_bytes.len() / STL10_IMAGE_BYTES;
    if images != label_bytes.len() {
        return Err(DatasetError::Pairing { images, labels: label_bytes.len() });
    }
    let lut = byte_lut::<T>();
    let side = STL10_SIDE;
    let plane = side * side;
    let samples = image_bytes
        .chunks_exact(STL10_IMAGE_BYTES)
        .zip(label_bytes)
        .enumerate()
        .map(|(index, (src, &label))| {
            if !(1..=10).contains(&label) {
                return Err(DatasetError::CorruptRecord { index, label });
            }
            let mut data = vec![T::zero(); STL10_IMAGE_BYTES];
            for c in 0..3 {
                let src = &src[c * plane..(c + 1) * plane];
                let dst = &mut data[c * plane..(c + 1) * plane];
                for (x, column) in src.chunks_exact(side).enumerate() {
                    for (y, &b) in column.iter().enumerate() {
                        dst[y * side + x] = lut[b as usize];
                    }
                }
            }
            Ok(LabeledSample::new(Image::from_parts(3, side, side, data), label as usize - 1))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new("stl10", (3, side, side), 10, samples)
}
