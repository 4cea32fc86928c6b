//! `CUTNET01` checkpoints: 8-byte magic, architecture descriptor, then the
//! parameter tensors as raw little-endian scalars in layer order.
//!
//! Descriptor: `u32` scalar width in bytes, then `u32` in_channels, height,
//! width, conv1, conv2, classes, then the dropout probability as `f64`.

use super::net::{Architecture, SmallCnn};
use super::NetError;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CUTNET01";
const DESCRIPTOR_LEN: usize = 7 * 4 + 8;

pub fn encode_checkpoint<T: Scalar>(net: &SmallCnn<T>) -> Vec<u8> {
    let a = &net.arch;
    let total: usize = net.params().iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(8 + DESCRIPTOR_LEN + total * T::BYTES);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [T::BYTES, a.in_channels, a.height, a.width, a.conv1, a.conv2, a.classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&a.dropout.to_le_bytes());
    for p in net.params() {
        for &v in p {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<SmallCnn<T>, NetError> {
    let bad = |m: &str| NetError::Checkpoint(m.to_string());
    if bytes.len() < 8 + DESCRIPTOR_LEN || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing CUTNET01 header"));
    }
    let field = |i: usize| {
        let o = 8 + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize
    };
    if field(0) != T::BYTES {
        return Err(NetError::Checkpoint(format!("checkpoint stores {}-byte scalars, expected {}", field(0), T::BYTES)));
    }
    let dropout = f64::from_le_bytes(bytes[8 + 28..8 + 36].try_into().expect("8 bytes"));
    let arch = Architecture {
        in_channels: field(1),
        height: field(2),
        width: field(3),
        conv1: field(4),
        conv2: field(5),
        classes: field(6),
        dropout,
    };
    let mut net = SmallCnn::<T>::zeros(arch)?;
    let mut payload = &bytes[8 + DESCRIPTOR_LEN..];
    let total: usize = net.params().iter().map(|p| p.len()).sum();
    if payload.len() != total * T::BYTES {
        return Err(NetError::Checkpoint(format!(
            "payload is {} bytes, architecture needs {}",
            payload.len(),
            total * T::BYTES
        )));
    }
    for p in net.params_mut() {
        for v in p.iter_mut() {
            *v = T::read_le(&payload[..T::BYTES]);
            payload = &payload[T::BYTES..];
        }
    }
    if !net.all_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok(net)
}
