use std::sync::Arc;

use super::PipelineError;
use crate::augment::{
    apply_cutout, normalize, random_crop, random_hflip, targeted_cutout, zero_pad, AugmentError, CutoutParams,
    RngStream,
};
use crate::datasets::DatasetStats;
use crate::scalar::Scalar;
use crate::tensor::{LabeledSample, Tensor4};

/// Saved single-channel feature maps, indexed by dataset sample index.
#[derive(Debug, Clone, Default)]
pub struct FeatureMapStore<T = f32> {
    maps: Vec<Option<Tensor4<T>>>,
}

impl<T: Scalar> FeatureMapStore<T> {
    pub fn new(maps: Vec<Option<Tensor4<T>>>) -> Self {
        Self { maps }
    }

    pub fn get(&self, index: usize) -> Option<&Tensor4<T>> {
        self.maps.get(index).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

#[derive(Debug, Clone)]
pub enum Transform<T = f32> {
    Normalize(DatasetStats),
    Pad(usize),
    Crop { height: usize, width: usize },
    HFlip,
    Cutout(CutoutParams),
    /// Samples without a stored map pass through unchanged.
    TargetedCutout(Arc<FeatureMapStore<T>>),
}

impl<T: Scalar> Transform<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Normalize(_) => "normalize",
            Transform::Pad(_) => "pad",
            Transform::Crop { .. } => "crop",
            Transform::HFlip => "hflip",
            Transform::Cutout(_) => "cutout",
            Transform::TargetedCutout(_) => "targeted_cutout",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Transform::Normalize(s) => format!("normalize(mean={:?}, std={:?})", s.mean, s.std),
            Transform::Pad(p) => format!("pad({p})"),
            Transform::Crop { height, width } => format!("crop({height}x{width})"),
            Transform::HFlip => "hflip".into(),
            Transform::Cutout(p) => format!("cutout(length={}, mode={:?})", p.length, p.mode),
            Transform::TargetedCutout(store) => format!("targeted_cutout({} maps)", store.len()),
        }
    }

    fn output_shape(&self, (c, h, w): (usize, usize, usize)) -> Result<(usize, usize, usize), String> {
        match self {
            Transform::Normalize(s) if s.channels() != c => {
                Err(format!("statistics have {} channels, input has {c}", s.channels()))
            }
            Transform::Pad(p) => Ok((c, h + 2 * p, w + 2 * p)),
            Transform::Crop { height, width } => {
                if *height == 0 || *width == 0 || *height > h || *width > w {
                    Err(format!("cannot crop {height}x{width} from {h}x{w}"))
                } else {
                    Ok((c, *height, *width))
                }
            }
            Transform::Cutout(p) if p.mode == crate::augment::CutoutMode::ConstrainedP50 && p.length > h.min(w) => {
                Err(format!("a {0}x{0} patch cannot lie inside {h}x{w}", p.length))
            }
            _ => Ok((c, h, w)),
        }
    }
}

/// Ordered list of transforms applied to one sample at a time.
#[derive(Debug, Clone, Default)]
pub struct TransformChain<T = f32> {
    stages: Vec<Transform<T>>,
}

impl<T: Scalar> TransformChain<T> {
    pub fn new(stages: Vec<Transform<T>>) -> Self {
        Self { stages }
    }

    pub fn empty() -> Self {
        Self { stages: Vec::new() }
    }

    /// Pad, random crop back to the input size, then mirror.
    pub fn standard(pad: usize, height: usize, width: usize) -> Self {
        Self::new(vec![Transform::Pad(pad), Transform::Crop { height, width }, Transform::HFlip])
    }

    pub fn with(mut self, stage: Transform<T>) -> Self {
        self.stages.push(stage);
        self
    }

    pub fn stages(&self) -> &[Transform<T>] {
        &self.stages
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn describe(&self) -> Vec<String> {
        self.stages.iter().map(Transform::describe).collect()
    }

    /// Shape produced from `input`, or the first incompatible stage.
    pub fn output_shape(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize), PipelineError> {
        self.stages.iter().enumerate().try_fold(input, |shape, (stage, t)| {
            t.output_shape(shape).map_err(|message| PipelineError::Chain { stage, name: t.name(), message })
        })
    }
}

/// Runs every stage in order with randomness drawn from the stream derived
/// from `(global_seed, epoch, index)`. The label is never touched.
pub fn apply_chain<T: Scalar>(
    sample: &LabeledSample<T>,
    chain: &TransformChain<T>,
    epoch: u64,
    index: u64,
    global_seed: u64,
) -> Result<LabeledSample<T>, PipelineError> {
    chain.output_shape(sample.image.shape())?;
    let mut rng = RngStream::derive(global_seed, epoch, index);
    let mut img = sample.image.clone();
    for (stage, t) in chain.stages.iter().enumerate() {
        let fail = |e: AugmentError| PipelineError::Chain { stage, name: t.name(), message: e.to_string() };
        img = match t {
            Transform::Normalize(stats) => normalize(&img, stats).map_err(fail)?,
            Transform::Pad(p) => zero_pad(&img, *p),
            Transform::Crop { height, width } => random_crop(&img, *height, *width, &mut rng).map_err(fail)?,
            Transform::HFlip => random_hflip(&img, &mut rng),
            Transform::Cutout(params) => apply_cutout(&img, params, &mut rng).map_err(fail)?,
            Transform::TargetedCutout(store) => match store.get(index as usize) {
                Some(map) => targeted_cutout(&img, map).map_err(fail)?,
                None => img,
            },
        };
    }
    Ok(LabeledSample::new(img, sample.label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::CutoutMode;
    use crate::tensor::Image;

    fn sample(c: usize, h: usize, w: usize) -> LabeledSample<f32> {
        let mut rng = RngStream::from_seed(5);
        let img = Image::new(c, h, w, (0..c * h * w).map(|_| rng.uniform() as f32).collect()).unwrap();
        LabeledSample::new(img, 3)
    }

    #[test]
    fn empty_chain_is_identity() {
        let s = sample(3, 8, 8);
        assert_eq!(apply_chain(&s, &TransformChain::empty(), 0, 0, 0).unwrap(), s);
    }

    #[test]
    fn cifar_recipe_keeps_shape() {
        let s = sample(3, 32, 32);
        let chain = TransformChain::standard(4, 32, 32).with(Transform::Cutout(CutoutParams::clipped(16)));
        let out = apply_chain(&s, &chain, 2, 17, 42).unwrap();
        assert_eq!(out.image.shape(), (3, 32, 32));
        assert_eq!(out.label, 3);
        assert_eq!(apply_chain(&s, &chain, 2, 17, 42).unwrap(), out);
        assert_ne!(apply_chain(&s, &chain, 3, 17, 42).unwrap(), out);
    }

    #[test]
    fn incompatible_stage_is_named() {
        let s = sample(3, 8, 8);
        let chain = TransformChain::new(vec![
            Transform::Pad(1),
            Transform::Crop { height: 12, width: 12 },
        ]);
        match apply_chain(&s, &chain, 0, 0, 0) {
            Err(PipelineError::Chain { stage: 1, name: "crop", .. }) => {}
            other => panic!("{other:?}"),
        }
        let chain = TransformChain::new(vec![Transform::Normalize(DatasetStats::identity(1))]);
        assert!(matches!(apply_chain(&s, &chain, 0, 0, 0), Err(PipelineError::Chain { stage: 0, .. })));
        let chain = TransformChain::new(vec![
            Transform::Crop { height: 4, width: 4 },
            Transform::Cutout(CutoutParams::new(5, CutoutMode::ConstrainedP50)),
        ]);
        assert!(matches!(apply_chain(&s, &chain, 0, 0, 0), Err(PipelineError::Chain { stage: 1, .. })));
    }

    #[test]
    fn targeted_stage_uses_sample_index() {
        let s = LabeledSample::new(Image::new(1, 2, 2, vec![1.0f32; 4]).unwrap(), 0);
        let map = Tensor4::new(1, 1, 1, 2, vec![1.0f32, 0.0]).unwrap();
        let store = Arc::new(FeatureMapStore::new(vec![None, Some(map)]));
        let chain = TransformChain::new(vec![Transform::TargetedCutout(store)]);
        assert_eq!(apply_chain(&s, &chain, 0, 0, 0).unwrap(), s);
        assert_eq!(apply_chain(&s, &chain, 0, 1, 0).unwrap().image.data(), &[0.0, 1.0, 0.0, 1.0]);
    }
}
