//! `CUTRAW01` container: 8-byte magic, five little-endian `u32`
//! (`n, c, h, w, class_count`), then `n` records of one label byte plus
//! `c*h*w` planar pixel bytes.

use super::{byte_lut, Dataset, DatasetError};
use crate::scalar::Scalar;
use crate::tensor::{Image, LabeledSample};

pub const RAW_MAGIC: &[u8; 8] = b"CUTRAW01";
pub const RAW_HEADER_LEN: usize = 8 + 5 * 4;

pub fn parse_raw<T: Scalar>(bytes: &[u8]) -> Result<Dataset<T>, DatasetError> {
    if bytes.len() < RAW_MAGIC.len() || &bytes[..8] != RAW_MAGIC {
        return Err(DatasetError::Format("missing CUTRAW01 magic".into()));
    }
    if bytes.len() < RAW_HEADER_LEN {
        return Err(DatasetError::Truncated { len: bytes.len(), record: RAW_HEADER_LEN });
    }
    let field = |i: usize| {
        let o = 8 + 4 * i;
        u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
    };
    let (n, c, h, w, classes) = (field(0), field(1), field(2), field(3), field(4));
    if c == 0 || h == 0 || w == 0 {
        return Err(DatasetError::Format(format!("zero dimension in header ({c}, {h}, {w})")));
    }
    if classes == 0 || classes > 256 {
        return Err(DatasetError::Format(format!("class count {classes} not in 1..=256")));
    }
    let record = 1 + c * h * w;
    let payload = &bytes[RAW_HEADER_LEN..];
    let expected = n.checked_mul(record).ok_or_else(|| DatasetError::Format("header size overflow".into()))?;
    if payload.len() < expected {
        return Err(DatasetError::Truncated { len: bytes.len(), record });
    }
    if payload.len() > expected {
        return Err(DatasetError::Format(format!(
            "{} trailing bytes after {n} records",
            payload.len() - expected
        )));
    }
    let lut = byte_lut::<T>();
    let samples = payload
        .chunks_exact(record)
        .enumerate()
        .map(|(index, rec)| {
            let label = rec[0];
            if label as usize >= classes {
                return Err(DatasetError::CorruptRecord { index, label });
            }
            let data = rec[1..].iter().map(|&b| lut[b as usize]).collect();
            Ok(LabeledSample::new(Image::from_parts(c, h, w, data), label as usize))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new("raw", (c, h, w), classes, samples)
}

/// Pixels are quantized as `round(clamp(p, 0, 1) * 255)`.
pub fn write_raw<T: Scalar>(ds: &Dataset<T>) -> Result<Vec<u8>, DatasetError> {
    if ds.class_count() > 256 {
        return Err(DatasetError::Format(format!("{} classes do not fit a label byte", ds.class_count())));
    }
    let (c, h, w) = ds.shape();
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + ds.len() * (1 + c * h * w));
    out.extend_from_slice(RAW_MAGIC);
    for v in [ds.len(), c, h, w, ds.class_count()] {
        let v = u32::try_from(v).map_err(|_| DatasetError::Format(format!("{v} does not fit u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in ds.samples() {
        out.push(s.label as u8);
        out.extend(s.image.data().iter().map(|&p| quantize_pixel(p)));
    }
    Ok(out)
}

pub(crate) fn quantize_pixel<T: Scalar>(p: T) -> u8 {
    let v = p.to_f64_lossy().clamp(0.0, 1.0) * 255.0;
    v.round() as u8
}
