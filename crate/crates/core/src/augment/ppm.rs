//! Binary PPM (P6) dumps for eyeballing augmented samples.

use std::io::{self, Write};
use std::path::Path;

use super::{denormalize, AugmentError};
use crate::datasets::DatasetStats;
use crate::scalar::Scalar;
use crate::tensor::Image;

/// Encodes `round(clamp(p, 0, 1) * 255)` per pixel after undoing
/// normalization. One-channel images are replicated to grey RGB.
pub fn encode_ppm<T: Scalar>(img: &Image<T>, stats: &DatasetStats) -> Result<Vec<u8>, AugmentError> {
    let (c, h, w) = img.shape();
    if c != 1 && c != 3 {
        return Err(AugmentError::Shape(format!("PPM needs 1 or 3 channels, got {c}")));
    }
    let img = denormalize(img, stats)?;
    let header = format!("P6\n{w} {h}\n255\n");
    let mut out = Vec::with_capacity(header.len() + 3 * h * w);
    out.extend_from_slice(header.as_bytes());
    let plane = h * w;
    let data = img.data();
    for i in 0..plane {
        for ch in 0..3 {
            let src = if c == 1 { 0 } else { ch };
            out.push(crate::datasets::quantize_pixel(data[src * plane + i]));
        }
    }
    Ok(out)
}

pub fn write_ppm<T: Scalar>(path: &Path, img: &Image<T>, stats: &DatasetStats) -> io::Result<()> {
    let bytes = encode_ppm(img, stats).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)
}
