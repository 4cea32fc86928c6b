use std::fs;
use std::path::Path;

use super::{input_err, AugmentArgs, CliError, CutoutArgs, DataArgs, DatasetKind};
use crate::augment::CutoutParams;
use crate::datasets::{
    occlusion_dataset, parse_cifar10, parse_cifar100, parse_raw, parse_stl10, Dataset, SyntheticConfig,
};
use crate::pipeline::{Transform, TransformChain};

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn concat(mut parts: Vec<Dataset<f32>>) -> Result<Dataset<f32>, CliError> {
    if parts.len() == 1 {
        return Ok(parts.pop().expect("one part"));
    }
    let first = &parts[0];
    let (name, shape, classes) = (first.name().to_string(), first.shape(), first.class_count());
    if let Some(p) = parts.iter().find(|p| p.shape() != shape || p.class_count() != classes) {
        return Err(CliError::Input(format!(
            "data files disagree: {shape:?} with {classes} classes vs {:?} with {}",
            p.shape(),
            p.class_count()
        )));
    }
    let samples = parts.into_iter().flat_map(Dataset::into_samples).collect();
    Dataset::new(name, shape, classes, samples).map_err(input_err)
}

fn load_files(kind: DatasetKind, paths: &[impl AsRef<Path>], labels: Option<&Path>) -> Result<Dataset<f32>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Input(format!("--dataset {kind:?} needs --data-path").to_lowercase()));
    }
    let parse = |bytes: &[u8]| match kind {
        DatasetKind::Cifar10 => parse_cifar10(bytes),
        DatasetKind::Cifar100 => parse_cifar100(bytes),
        _ => parse_raw(bytes),
    };
    if kind == DatasetKind::Stl10 {
        let [images] = paths else {
            return Err(CliError::Input("stl10 takes exactly one --data-path".into()));
        };
        let labels = labels.ok_or_else(|| CliError::Input("stl10 needs --labels-path".into()))?;
        return parse_stl10(&read(images.as_ref())?, &read(labels)?).map_err(input_err);
    }
    let parts = paths
        .iter()
        .map(|p| parse(&read(p.as_ref())?).map_err(|e| CliError::Input(format!("{}: {e}", p.as_ref().display()))))
        .collect::<Result<Vec<_>, _>>()?;
    concat(parts)
}

pub fn load(args: &DataArgs) -> Result<Dataset<f32>, CliError> {
    let ds = match args.dataset {
        DatasetKind::Synthetic => {
            let cfg = SyntheticConfig { samples: args.synthetic_samples, seed: args.synthetic_seed, ..Default::default() };
            occlusion_dataset(&cfg).map_err(input_err)?
        }
        kind => load_files(kind, &args.data_path, args.labels_path.as_deref())?,
    };
    let ds = match args.limit {
        Some(n) => ds.take(n),
        None => ds,
    };
    if ds.is_empty() {
        return Err(CliError::Input("dataset has no samples".into()));
    }
    Ok(ds)
}

/// Evaluation files in the training data's format.
pub fn load_eval(args: &DataArgs, paths: &[std::path::PathBuf], labels: Option<&Path>) -> Result<Dataset<f32>, CliError> {
    if args.dataset == DatasetKind::Synthetic {
        return Err(CliError::Input("evaluation files cannot be combined with the synthetic dataset".into()));
    }
    load_files(args.dataset, paths, labels)
}

/// Pad, crop and flip (unless disabled) followed by cutout when its length
/// is positive. Input is assumed normalized.
pub fn augment_chain(args: &AugmentArgs, cutout: Option<&CutoutArgs>, shape: (usize, usize, usize)) -> TransformChain<f32> {
    let (_, h, w) = shape;
    let mut chain = if args.no_augment {
        TransformChain::empty()
    } else {
        TransformChain::standard(args.pad.unwrap_or(h.min(w) / 8), h, w)
    };
    if let Some(c) = cutout.filter(|c| c.cutout_length > 0) {
        chain = chain.with(Transform::Cutout(CutoutParams::new(c.cutout_length, c.cutout_mode.into())));
    }
    chain
}
