//! Sorted activation-magnitude profiles of a trained network.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::augment::RngStream;
use crate::datasets::Dataset;
use crate::pipeline::FeatureMapStore;
use crate::scalar::Scalar;
use crate::smallnet::{NetError, Probe, SmallCnn};
use crate::tensor::{batch_from_samples, LabeledSample, Tensor4};

const CHUNK: usize = 64;
pub const HEAD_FRACTION: f64 = 0.1;
pub const TAIL_FRACTION: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dataset is empty")]
    Empty,
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileScope {
    Sample(usize),
    DatasetMean { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationProfile {
    pub layer: Probe,
    /// Non-increasing, non-negative.
    pub magnitudes: Vec<f64>,
    pub scope: ProfileScope,
}

impl ActivationProfile {
    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// `rank,magnitude` with ranks starting at 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,magnitude\n");
        for (i, m) in self.magnitudes.iter().enumerate() {
            let _ = writeln!(out, "{},{m}", i + 1);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileComparison {
    pub layer: Probe,
    pub head_ratio: f64,
    pub tail_ratio: f64,
}

impl ProfileComparison {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("comparison serializes")
    }
}

fn layer_activations<T: Scalar>(net: &SmallCnn<T>, batch: &Tensor4<T>, layer: Probe) -> Result<Tensor4<T>, NetError> {
    let mut out = net.forward(batch, false, &mut RngStream::from_seed(0))?;
    let idx = out.activations.iter().position(|(p, _)| *p == layer).expect("every probe is recorded");
    Ok(out.activations.swap_remove(idx).1)
}

fn sorted_magnitudes<T: Scalar>(values: &[T]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().map(|x| x.to_f64_lossy().abs()).collect();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v
}

fn add_sorted<T: Scalar>(sums: &mut [f64], values: &[T]) {
    for (s, m) in sums.iter_mut().zip(sorted_magnitudes(values)) {
        *s += m;
    }
}

fn position_sums<T: Scalar>(net: &SmallCnn<T>, samples: &[LabeledSample<T>], layer: Probe) -> Result<Vec<f64>, AnalysisError> {
    let (batch, _) = batch_from_samples(samples).map_err(|e| AnalysisError::Argument(e.to_string()))?;
    let acts = layer_activations(net, &batch, layer)?;
    let mut sums = vec![0.0; acts.sample_len()];
    for i in 0..acts.n() {
        add_sorted(&mut sums, acts.sample_data(i));
    }
    Ok(sums)
}

/// Each sample's |activations| at `layer` are sorted descending, then the
/// sorted vectors are averaged position-wise. Chunks run in parallel; their
/// partial sums are combined in chunk order so the result is reproducible.
pub fn profile_dataset<T: Scalar>(net: &SmallCnn<T>, ds: &Dataset<T>, layer: Probe) -> Result<ActivationProfile, AnalysisError> {
    if ds.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let partials = ds
        .samples()
        .par_chunks(CHUNK)
        .map(|chunk| position_sums(net, chunk, layer))
        .collect::<Result<Vec<_>, _>>()?;
    let mut total = vec![0.0; partials[0].len()];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let n = ds.len() as f64;
    total.iter_mut().for_each(|t| *t /= n);
    Ok(ActivationProfile { layer, magnitudes: total, scope: ProfileScope::DatasetMean { samples: ds.len() } })
}

pub fn profile_sample<T: Scalar>(
    net: &SmallCnn<T>,
    sample: &LabeledSample<T>,
    sample_id: usize,
    layer: Probe,
) -> Result<ActivationProfile, AnalysisError> {
    let magnitudes = position_sums(net, std::slice::from_ref(sample), layer)?;
    Ok(ActivationProfile { layer, magnitudes, scope: ProfileScope::Sample(sample_id) })
}

fn mass_ratio(a: &[f64], b: &[f64]) -> f64 {
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    match (sa == 0.0, sb == 0.0) {
        (true, true) => 1.0,
        (true, false) => f64::INFINITY,
        _ => sb / sa,
    }
}

/// Head is the top 10% of positions, tail the bottom 50% (both rounded up);
/// each ratio is the mass of `b` over the mass of `a` in that region. Two
/// all-zero regions compare as 1.
pub fn compare_profiles(a: &ActivationProfile, b: &ActivationProfile) -> Result<ProfileComparison, AnalysisError> {
    if a.layer != b.layer {
        return Err(AnalysisError::Argument(format!("profiles are from different layers ({} vs {})", a.layer, b.layer)));
    }
    if a.len() != b.len() {
        return Err(AnalysisError::Argument(format!("profile lengths differ ({} vs {})", a.len(), b.len())));
    }
    let n = a.len();
    if n == 0 {
        return Err(AnalysisError::Argument("profiles are empty".into()));
    }
    let head = ((n as f64 * HEAD_FRACTION).ceil() as usize).clamp(1, n);
    let tail = ((n as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, n);
    Ok(ProfileComparison {
        layer: a.layer,
        head_ratio: mass_ratio(&a.magnitudes[..head], &b.magnitudes[..head]),
        tail_ratio: mass_ratio(&a.magnitudes[n - tail..], &b.magnitudes[n - tail..]),
    })
}

/// For each sample, the channel of `layer` with the largest total
/// activation, as a `1x1xHxW` map for targeted cutout.
pub fn strongest_feature_maps<T: Scalar>(
    net: &SmallCnn<T>,
    ds: &Dataset<T>,
    layer: Probe,
) -> Result<FeatureMapStore<T>, AnalysisError> {
    if layer == Probe::Logits {
        return Err(AnalysisError::Argument("logits have no spatial extent".into()));
    }
    let chunks = ds
        .samples()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (batch, _) = batch_from_samples(chunk).map_err(|e| AnalysisError::Argument(e.to_string()))?;
            let acts = layer_activations(net, &batch, layer)?;
            let (n, c, h, w) = acts.shape();
            let p = h * w;
            (0..n)
                .map(|i| {
                    let data = acts.sample_data(i);
                    let mass = |k: usize| data[k * p..(k + 1) * p].iter().copied().sum::<T>();
                    let best = (0..c).fold(0, |b, k| if mass(k) > mass(b) { k } else { b });
                    Tensor4::new(1, 1, h, w, data[best * p..(best + 1) * p].to_vec())
                        .map(Some)
                        .map_err(|e| AnalysisError::Argument(e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureMapStore::new(chunks.into_iter().flatten().collect()))
}
