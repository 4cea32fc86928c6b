//! Procedural "parts and occluders" classification task.
//!
//! Every class owns a handful of small high-contrast part templates. An
//! image shows a few parts of its own class plus distractor parts borrowed
//! from other classes, scattered over a noisy shaded background; some
//! images additionally carry a grey occluder that may hide parts. Pixels
//! are quantized to multiples of 1/255 so the data round-trips through the
//! raw container exactly.

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError};
use crate::augment::rng::{tags, RngStream};
use crate::scalar::Scalar;
use crate::tensor::{Image, LabeledSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub samples: usize,
    pub classes: usize,
    pub channels: usize,
    pub side: usize,
    pub part_size: usize,
    pub parts_per_class: usize,
    /// Own-class parts drawn into each image.
    pub parts_per_image: usize,
    /// Parts from other classes drawn into each image.
    pub distractors: usize,
    pub noise: f64,
    pub occlusion_prob: f64,
    pub occlusion_size: usize,
    /// Fraction of labels replaced by a uniformly random class.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            samples: 4_000,
            classes: 10,
            channels: 3,
            side: 16,
            part_size: 5,
            parts_per_class: 2,
            parts_per_image: 2,
            distractors: 1,
            noise: 0.05,
            occlusion_prob: 0.5,
            occlusion_size: 6,
            label_noise: 0.0,
            seed: 0,
        }
    }
}

fn template(cfg: &SyntheticConfig, class: usize, part: usize) -> Vec<f64> {
    let mut rng = RngStream::derive_tagged(tags::SYNTHETIC, cfg.seed, 0, (class * cfg.parts_per_class + part) as u64);
    let n = cfg.channels * cfg.part_size * cfg.part_size;
    (0..n).map(|_| if rng.coin() { 0.9 } else { 0.1 }).collect()
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

pub fn occlusion_dataset<T: Scalar>(cfg: &SyntheticConfig) -> Result<Dataset<T>, DatasetError> {
    let (c, s, p) = (cfg.channels, cfg.side, cfg.part_size);
    if cfg.classes < 2 || c == 0 || p == 0 || p > s || cfg.parts_per_image > cfg.parts_per_class {
        return Err(DatasetError::Argument(format!("inconsistent synthetic configuration {cfg:?}")));
    }
    let templates: Vec<Vec<Vec<f64>>> = (0..cfg.classes)
        .map(|k| (0..cfg.parts_per_class).map(|j| template(cfg, k, j)).collect())
        .collect();

    let samples = (0..cfg.samples)
        .map(|i| {
            let mut rng = RngStream::derive_tagged(tags::SYNTHETIC, cfg.seed, 1, i as u64);
            let class = rng.below(cfg.classes);

            // shaded background
            let base: Vec<f64> = (0..c).map(|_| 0.35 + 0.3 * rng.uniform()).collect();
            let (gy, gx) = (0.3 * (rng.uniform() - 0.5), 0.3 * (rng.uniform() - 0.5));

            let mut px = vec![0.0f64; c * s * s];
            for ch in 0..c {
                for y in 0..s {
                    for x in 0..s {
                        let ramp = gy * (y as f64 / s as f64 - 0.5) + gx * (x as f64 / s as f64 - 0.5);
                        px[(ch * s + y) * s + x] = base[ch] + ramp;
                    }
                }
            }

            // parts: own class first, then distractors from other classes
            let mut own: Vec<usize> = (0..cfg.parts_per_class).collect();
            rng.shuffle(&mut own);
            let mut parts: Vec<&[f64]> = own[..cfg.parts_per_image].iter().map(|&j| templates[class][j].as_slice()).collect();
            for _ in 0..cfg.distractors {
                let other = (class + 1 + rng.below(cfg.classes - 1)) % cfg.classes;
                parts.push(&templates[other][rng.below(cfg.parts_per_class)]);
            }
            let mut placed: Vec<(usize, usize)> = Vec::new();
            for part in parts {
                let mut pos = (rng.below(s - p + 1), rng.below(s - p + 1));
                for _ in 0..20 {
                    let clear = placed.iter().all(|&(y, x)| y.abs_diff(pos.0) >= p || x.abs_diff(pos.1) >= p);
                    if clear {
                        break;
                    }
                    pos = (rng.below(s - p + 1), rng.below(s - p + 1));
                }
                placed.push(pos);
                for ch in 0..c {
                    for dy in 0..p {
                        for dx in 0..p {
                            px[(ch * s + pos.0 + dy) * s + pos.1 + dx] = part[(ch * p + dy) * p + dx];
                        }
                    }
                }
            }

            if cfg.occlusion_size > 0 && rng.bernoulli(cfg.occlusion_prob) {
                let o = cfg.occlusion_size.min(s);
                let (oy, ox) = (rng.below(s - o + 1), rng.below(s - o + 1));
                let grey = 0.3 + 0.4 * rng.uniform();
                for ch in 0..c {
                    for y in oy..oy + o {
                        for x in ox..ox + o {
                            px[(ch * s + y) * s + x] = grey;
                        }
                    }
                }
            }

            for v in px.iter_mut() {
                *v = quantize(*v + cfg.noise * rng.normal());
            }
            let label = if cfg.label_noise > 0.0 && rng.bernoulli(cfg.label_noise) { rng.below(cfg.classes) } else { class };
            let data = px.into_iter().map(T::from_f64_lossy).collect();
            Ok(LabeledSample::new(Image::new(c, s, s, data).map_err(|e| DatasetError::Format(e.to_string()))?, label))
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Dataset::new("synthetic", (c, s, s), cfg.classes, samples)
}
