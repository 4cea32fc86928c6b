use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError};
use crate::scalar::Scalar;

/// Per-channel mean and population standard deviation, in `[0, 1]` pixel units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DatasetStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self, DatasetError> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(DatasetError::Argument(format!(
                "mean has {} channels, std has {}",
                mean.len(),
                std.len()
            )));
        }
        if let Some(c) = std.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(DatasetError::DegenerateChannel(c));
        }
        Ok(Self { mean, std })
    }

    /// Mean 0, std 1 for every channel.
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Welford accumulation in f64 over every pixel of each channel.
pub fn compute_stats<T: Scalar>(ds: &Dataset<T>) -> Result<DatasetStats, DatasetError> {
    if ds.is_empty() {
        return Err(DatasetError::Empty);
    }
    let (channels, h, w) = ds.shape();
    let plane = h * w;
    let mut count = 0u64;
    let mut mean = vec![0.0f64; channels];
    let mut m2 = vec![0.0f64; channels];
    for s in ds.samples() {
        let data = s.image.data();
        for i in 0..plane {
            count += 1;
            let k = count as f64;
            for c in 0..channels {
                let v = data[c * plane + i].to_f64_lossy();
                let delta = v - mean[c];
                mean[c] += delta / k;
                m2[c] += delta * (v - mean[c]);
            }
        }
    }
    let std = m2.iter().map(|&m| (m / count as f64).sqrt()).collect();
    DatasetStats::new(mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Image, LabeledSample};

    fn ds_of(images: Vec<Image<f32>>) -> Dataset<f32> {
        let samples = images.into_iter().map(|i| LabeledSample::new(i, 0)).collect();
        Dataset::from_samples("t", 1, samples).unwrap()
    }

    #[test]
    fn two_point() {
        let stats = compute_stats(&ds_of(vec![Image::new(1, 1, 2, vec![0.0, 1.0]).unwrap()])).unwrap();
        assert_eq!(stats.mean, vec![0.5]);
        assert_eq!(stats.std, vec![0.5]);
    }

    #[test]
    fn constant_is_degenerate() {
        let ds = ds_of(vec![Image::new(2, 2, 2, vec![0.3; 8]).unwrap(); 3]);
        assert_eq!(compute_stats(&ds).unwrap_err(), DatasetError::DegenerateChannel(0));
    }

    #[test]
    fn empty_is_rejected() {
        let ds = Dataset::<f32>::new("e", (1, 1, 1), 1, vec![]).unwrap();
        assert_eq!(compute_stats(&ds).unwrap_err(), DatasetError::Empty);
    }

    #[test]
    fn matches_two_pass_oracle() {
        // deterministic pseudo-random pixels
        let mut x = 12345u64;
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 40) as f32 / (1u64 << 24) as f32
        };
        let images: Vec<Image<f32>> = (0..100)
            .map(|_| Image::new(3, 4, 5, (0..60).map(|_| next()).collect()).unwrap())
            .collect();
        let ds = ds_of(images.clone());
        let stats = compute_stats(&ds).unwrap();

        for c in 0..3 {
            let vals: Vec<f64> = images.iter().flat_map(|i| i.plane(c).iter().map(|&v| v as f64)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!((stats.mean[c] - mean).abs() < 1e-6);
            assert!((stats.std[c] - var.sqrt()).abs() < 1e-6);
        }
    }
}
