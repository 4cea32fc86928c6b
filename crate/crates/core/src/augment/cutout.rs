use serde::{Deserialize, Serialize};

use super::{AugmentError, RngStream};
use crate::scalar::Scalar;
use crate::tensor::{Image, Tensor4};

/// How the square patch is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CutoutMode {
    /// Center uniform over all pixels; the patch is clipped at the borders.
    #[default]
    AlwaysClipped,
    /// Skipped with probability 0.5, otherwise placed fully inside the image.
    ConstrainedP50,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoutParams {
    /// Side of the square patch in pixels; 0 disables cutout.
    pub length: usize,
    pub mode: CutoutMode,
}

impl CutoutParams {
    pub fn new(length: usize, mode: CutoutMode) -> Self {
        Self { length, mode }
    }

    pub fn clipped(length: usize) -> Self {
        Self::new(length, CutoutMode::AlwaysClipped)
    }
}

/// Half-open pixel rectangle `[y0, y1) x [x0, x1)`, already clipped to the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl MaskRect {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.y0..self.y1).contains(&y) && (self.x0..self.x1).contains(&x)
    }
}

/// Patch with top-left `(cy - L/2, cx - L/2)` and side `L`, intersected
/// with the `h x w` image.
pub fn cutout_mask_rect(h: usize, w: usize, length: usize, cx: usize, cy: usize) -> Result<MaskRect, AugmentError> {
    if cx >= w || cy >= h {
        return Err(AugmentError::Argument(format!("center ({cy}, {cx}) outside {h}x{w} image")));
    }
    let clip = |center: usize, extent: usize| {
        let lo = center as isize - (length / 2) as isize;
        let hi = lo + length as isize;
        (lo.clamp(0, extent as isize) as usize, hi.clamp(0, extent as isize) as usize)
    };
    let (y0, y1) = clip(cy, h);
    let (x0, x1) = clip(cx, w);
    Ok(MaskRect { x0, y0, x1, y1 })
}

/// Draws the patch for one application; `None` means the image passes
/// through unmodified.
pub fn sample_cutout_rect(
    h: usize,
    w: usize,
    params: &CutoutParams,
    rng: &mut RngStream,
) -> Result<Option<MaskRect>, AugmentError> {
    let l = params.length;
    match params.mode {
        CutoutMode::AlwaysClipped => {
            if l == 0 {
                return Ok(None);
            }
            let cy = rng.below(h);
            let cx = rng.below(w);
            cutout_mask_rect(h, w, l, cx, cy).map(Some)
        }
        CutoutMode::ConstrainedP50 => {
            if l > h.min(w) {
                return Err(AugmentError::Argument(format!(
                    "a {l}x{l} patch cannot lie inside a {h}x{w} image"
                )));
            }
            if l == 0 || rng.coin() {
                return Ok(None);
            }
            let y0 = rng.below(h - l + 1);
            let x0 = rng.below(w - l + 1);
            Ok(Some(MaskRect { x0, y0, x1: x0 + l, y1: y0 + l }))
        }
    }
}

/// Sets every channel inside `rect` to exactly zero.
pub fn apply_mask<T: Scalar>(img: &Image<T>, rect: &MaskRect) -> Image<T> {
    let (_, h, w) = img.shape();
    let mut out = img.clone();
    for plane in out.data_mut().chunks_exact_mut(h * w) {
        for y in rect.y0..rect.y1 {
            plane[y * w + rect.x0..y * w + rect.x1].fill(T::zero());
        }
    }
    out
}

pub fn apply_cutout_with_rect<T: Scalar>(
    img: &Image<T>,
    params: &CutoutParams,
    rng: &mut RngStream,
) -> Result<(Image<T>, Option<MaskRect>), AugmentError> {
    let (_, h, w) = img.shape();
    Ok(match sample_cutout_rect(h, w, params, rng)? {
        Some(rect) => (apply_mask(img, &rect), Some(rect)),
        None => (img.clone(), None),
    })
}

/// Zero-mask a square patch at a random location. Expects a normalized
/// image so that zero is the per-channel dataset mean.
pub fn apply_cutout<T: Scalar>(img: &Image<T>, params: &CutoutParams, rng: &mut RngStream) -> Result<Image<T>, AugmentError> {
    apply_cutout_with_rect(img, params, rng).map(|(img, _)| img)
}

/// Nearest-neighbour resize of a single-channel map: `src = floor(dst * in / out)`.
pub fn upsample_nearest<T: Scalar>(map: &[T], in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = y * in_h / out_h;
        for x in 0..out_w {
            out.push(map[sy * in_w + x * in_w / out_w]);
        }
    }
    out
}

/// Zeroes the pixels where the upsampled feature map strictly exceeds its
/// own mean. `feature_map` must be `1 x 1 x h_f x w_f`.
pub fn targeted_cutout<T: Scalar>(img: &Image<T>, feature_map: &Tensor4<T>) -> Result<Image<T>, AugmentError> {
    let (n, c, fh, fw) = feature_map.shape();
    let (_, h, w) = img.shape();
    if n != 1 || c != 1 || fh == 0 || fw == 0 {
        return Err(AugmentError::Shape(format!(
            "feature map must be 1x1xHxW and non-empty, got {n}x{c}x{fh}x{fw}"
        )));
    }
    if fh > h || fw > w {
        return Err(AugmentError::Shape(format!("{fh}x{fw} feature map exceeds {h}x{w} image")));
    }
    let up = upsample_nearest(feature_map.data(), fh, fw, h, w);
    let mean = up.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / up.len() as f64;
    let mut out = img.clone();
    for plane in out.data_mut().chunks_exact_mut(h * w) {
        for (p, u) in plane.iter_mut().zip(&up) {
            if u.to_f64_lossy() > mean {
                *p = T::zero();
            }
        }
    }
    Ok(out)
}
