use std::path::Path;

use crate::error::{Error, Result};
use crate::wsdata::{dataset_dir, load_item_feature, read_wsf, Manifest, WeightSpaceFeature};

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Label(usize),
    Scalar(f64),
    /// A dense target, e.g. the pixels of an edit target image.
    Values(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct Example {
    pub input: WeightSpaceFeature,
    pub target: Target,
}

impl Example {
    pub fn new(input: WeightSpaceFeature, target: Target) -> Self {
        Example { input, target }
    }
}

/// Loads every item of `split` from a dataset directory (or manifest path).
/// Edit targets take precedence over labels, labels over scalar targets.
pub fn load_examples(path: &Path, split: &str) -> Result<Vec<Example>> {
    let manifest = Manifest::load(path)?;
    let dir = dataset_dir(path);
    manifest
        .split(split)
        .into_iter()
        .map(|item| {
            let input = load_item_feature(&dir, item)?;
            let target = if let Some(p) = &item.edit_target_path {
                let img = read_wsf(dir.join(p))?;
                Target::Values(img.weight(0).to_vec())
            } else if let Some(l) = item.label {
                Target::Label(l)
            } else if let Some(t) = item.target {
                Target::Scalar(t)
            } else {
                return Err(Error::Format {
                    kind: "dataset manifest",
                    msg: format!(
                        "item {} has no label, target, or edit target",
                        item.wsf_path
                    ),
                });
            };
            Ok(Example { input, target })
        })
        .collect()
}
