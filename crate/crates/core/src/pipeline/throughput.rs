use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{epoch_batches, LoaderConfig, PipelineError, TransformChain};
use crate::datasets::Dataset;
use crate::scalar::Scalar;

/// Serialized as a single-line JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub workers: usize,
    pub samples_per_sec: f64,
    /// Throughput at `workers` divided by throughput with one worker.
    pub speedup: f64,
}

impl ThroughputReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn samples_per_sec<T: Scalar>(
    ds: &Arc<Dataset<T>>,
    chain: &Arc<TransformChain<T>>,
    cfg: &LoaderConfig,
) -> Result<f64, PipelineError> {
    let start = Instant::now();
    let mut samples = 0usize;
    for batch in epoch_batches(ds.clone(), chain.clone(), cfg, 0)? {
        samples += batch?.labels.len();
    }
    Ok(samples as f64 / start.elapsed().as_secs_f64().max(1e-9))
}

/// Times one epoch with a single worker, then with `cfg.worker_count`.
pub fn throughput_probe<T: Scalar>(
    ds: Arc<Dataset<T>>,
    chain: Arc<TransformChain<T>>,
    cfg: &LoaderConfig,
) -> Result<ThroughputReport, PipelineError> {
    let single = LoaderConfig { worker_count: 1, ..cfg.clone() };
    let base = samples_per_sec(&ds, &chain, &single)?;
    let rate = if cfg.worker_count == 1 { base } else { samples_per_sec(&ds, &chain, cfg)? };
    Ok(ThroughputReport { workers: cfg.worker_count, samples_per_sec: rate, speedup: rate / base })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Image, LabeledSample};

    #[test]
    fn report_schema() {
        let samples = (0..64).map(|i| LabeledSample::new(Image::<f32>::zeros(3, 8, 8).unwrap(), i % 2)).collect();
        let ds = Arc::new(Dataset::new("z", (3, 8, 8), 2, samples).unwrap());
        let cfg = LoaderConfig { batch_size: 8, worker_count: 2, ..Default::default() };
        let report = throughput_probe(ds, Arc::new(TransformChain::empty()), &cfg).unwrap();
        assert!(report.speedup > 0.0 && report.samples_per_sec > 0.0);
        let line = report.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        for key in ["workers", "samples_per_sec", "speedup"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["workers"], 2);
    }
}
