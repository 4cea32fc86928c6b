//! Image transforms: normalization, zero padding, cropping, mirroring and
//! the cutout family.
//!
//! Every transform is a pure function of its inputs and an [`RngStream`];
//! none of them rescales surviving pixel values.

mod cutout;
pub mod ppm;
pub mod rng;

use thiserror::Error;

use crate::datasets::{Dataset, DatasetStats};
use crate::scalar::Scalar;
use crate::tensor::Image;

pub use cutout::{
    apply_cutout, apply_cutout_with_rect, apply_mask, cutout_mask_rect, sample_cutout_rect, targeted_cutout,
    upsample_nearest, CutoutMode, CutoutParams, MaskRect,
};
pub use rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AugmentError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// `out[c,y,x] = (in[c,y,x] - mean[c]) / std[c]`
pub fn normalize<T: Scalar>(img: &Image<T>, stats: &DatasetStats) -> Result<Image<T>, AugmentError> {
    affine_per_channel(img, stats, |v, m, s| (v - m) / s)
}

/// Inverse of [`normalize`].
pub fn denormalize<T: Scalar>(img: &Image<T>, stats: &DatasetStats) -> Result<Image<T>, AugmentError> {
    affine_per_channel(img, stats, |v, m, s| v * s + m)
}

fn affine_per_channel<T: Scalar>(
    img: &Image<T>,
    stats: &DatasetStats,
    f: impl Fn(T, T, T) -> T,
) -> Result<Image<T>, AugmentError> {
    let (c, h, w) = img.shape();
    if stats.channels() != c {
        return Err(AugmentError::Shape(format!(
            "image has {c} channels, statistics have {}",
            stats.channels()
        )));
    }
    let plane = h * w;
    let mut out = img.clone();
    for (ch, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
        let m = T::from_f64_lossy(stats.mean[ch]);
        let s = T::from_f64_lossy(stats.std[ch]);
        for v in chunk {
            *v = f(*v, m, s);
        }
    }
    Ok(out)
}

/// Normalizes every image of a dataset.
pub fn normalize_dataset<T: Scalar>(ds: &Dataset<T>, stats: &DatasetStats) -> Result<Dataset<T>, AugmentError> {
    ds.map_images(|img| normalize(img, stats))
}

/// Zero border of `pad` pixels on every side.
pub fn zero_pad<T: Scalar>(img: &Image<T>, pad: usize) -> Image<T> {
    if pad == 0 {
        return img.clone();
    }
    let (c, h, w) = img.shape();
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut data = vec![T::zero(); c * ph * pw];
    for ch in 0..c {
        let src = img.plane(ch);
        for y in 0..h {
            let dst = (ch * ph + y + pad) * pw + pad;
            data[dst..dst + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    Image::from_parts(c, ph, pw, data)
}

/// Window with top-left corner `(oy, ox)`.
pub fn crop_at<T: Scalar>(
    img: &Image<T>,
    oy: usize,
    ox: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Image<T>, AugmentError> {
    let (c, h, w) = img.shape();
    if out_h == 0 || out_w == 0 || oy + out_h > h || ox + out_w > w {
        return Err(AugmentError::Shape(format!(
            "{out_h}x{out_w} window at ({oy}, {ox}) does not fit a {h}x{w} image"
        )));
    }
    let mut data = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let src = img.plane(ch);
        for y in oy..oy + out_h {
            data.extend_from_slice(&src[y * w + ox..y * w + ox + out_w]);
        }
    }
    Ok(Image::from_parts(c, out_h, out_w, data))
}

/// Offset drawn uniformly: row first, then column.
pub fn random_crop<T: Scalar>(
    img: &Image<T>,
    out_h: usize,
    out_w: usize,
    rng: &mut RngStream,
) -> Result<Image<T>, AugmentError> {
    let (_, h, w) = img.shape();
    if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
        return Err(AugmentError::Shape(format!("cannot crop {out_h}x{out_w} from {h}x{w}")));
    }
    let oy = rng.below(h - out_h + 1);
    let ox = rng.below(w - out_w + 1);
    crop_at(img, oy, ox, out_h, out_w)
}

/// `out[c,y,x] = in[c,y,W-1-x]`
pub fn hflip<T: Scalar>(img: &Image<T>) -> Image<T> {
    let w = img.width();
    let mut out = img.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    out
}

/// Mirrors with probability one half.
pub fn random_hflip<T: Scalar>(img: &Image<T>, rng: &mut RngStream) -> Image<T> {
    if rng.coin() {
        hflip(img)
    } else {
        img.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> Image<f32> {
        Image::new(c, h, w, (0..c * h * w).map(|i| i as f32 / 7.0).collect()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let stats = DatasetStats::new(vec![0.5], vec![0.25]).unwrap();
        let img = Image::new(1, 1, 1, vec![0.5f32]).unwrap();
        assert_eq!(normalize(&img, &stats).unwrap().data(), &[0.0]);

        let img = ramp(3, 4, 4);
        assert_eq!(normalize(&img, &DatasetStats::identity(3)).unwrap(), img);
        assert!(matches!(normalize(&img, &stats), Err(AugmentError::Shape(_))));
    }

    #[test]
    fn normalize_inverse() {
        let stats = DatasetStats::new(vec![0.49, 0.48, 0.45], vec![0.25, 0.24, 0.26]).unwrap();
        let mut rng = RngStream::from_seed(4);
        let img = Image::new(3, 8, 8, (0..192).map(|_| rng.uniform() as f32).collect()).unwrap();
        let back = denormalize(&normalize(&img, &stats).unwrap(), &stats).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn pad_shapes_and_border() {
        let img = ramp(3, 32, 32);
        let p = zero_pad(&img, 4);
        assert_eq!(p.shape(), (3, 40, 40));
        assert_eq!(zero_pad(&ramp(3, 96, 96), 12).shape(), (3, 120, 120));
        assert_eq!(zero_pad(&img, 0), img);
        for c in 0..3 {
            for y in 0..40 {
                for x in 0..40 {
                    let inside = (4..36).contains(&y) && (4..36).contains(&x);
                    let v = p.at(c, y, x);
                    if inside {
                        assert_eq!(v, img.at(c, y - 4, x - 4));
                    } else {
                        assert_eq!(v.to_bits(), 0);
                    }
                }
            }
        }
    }

    #[test]
    fn crop_cases() {
        let img = ramp(2, 5, 6);
        let mut rng = RngStream::from_seed(0);
        assert_eq!(random_crop(&img, 5, 6, &mut rng).unwrap(), img);
        assert!(matches!(random_crop(&img, 6, 6, &mut rng), Err(AugmentError::Shape(_))));

        let tiny = Image::new(1, 2, 2, vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(crop_at(&tiny, 1, 1, 1, 1).unwrap().data(), &[4.0]);
        assert!(crop_at(&tiny, 1, 1, 2, 1).is_err());
    }

    #[test]
    fn crop_offsets_uniform() {
        let img = ramp(1, 40, 40);
        let mut counts = [0usize; 81];
        for i in 0..10_000u64 {
            let mut rng = RngStream::derive(11, 0, i);
            let out = random_crop(&img, 32, 32, &mut rng).unwrap();
            // the top-left value identifies the offset
            let v = (out.at(0, 0, 0) * 7.0).round() as usize;
            let (oy, ox) = (v / 40, v % 40);
            counts[oy * 9 + ox] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0));
        let expected = 10_000.0 / 81.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 80 degrees of freedom, p = 0.001 critical value
        assert!(chi2 < 124.84, "chi-square {chi2}");
    }

    #[test]
    fn flip_cases() {
        let img = Image::new(1, 1, 2, vec![1.0f32, 2.0]).unwrap();
        assert_eq!(hflip(&img).data(), &[2.0, 1.0]);
        let big = ramp(3, 5, 7);
        assert_eq!(hflip(&hflip(&big)), big);

        let flips = (0..10_000u64)
            .filter(|&i| random_hflip(&img, &mut RngStream::derive(3, 1, i)) != img)
            .count();
        let f = flips as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&f), "{f}");
    }
}
