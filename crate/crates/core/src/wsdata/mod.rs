//! Weight-space data model: architecture descriptors, multi-channel features,
//! the neuron permutation group action, conv folding, and the `WSF1` file format.

mod feature;
mod fold;
mod manifest;
mod perm;
mod spec;
mod wsf;

pub use feature::{InitKind, WeightSpaceFeature};
pub use fold::{fold_conv, folded_layer, unfold_conv, FoldedFeature};
pub use manifest::{
    dataset_dir, load_item_feature, manifest_path, Manifest, ManifestItem, MANIFEST_FILE,
};
pub use perm::{apply_action, random_permutation, GroupTag, NeuronPermutation};
pub use spec::{LayerDesc, LayerKind, WeightSpaceSpec};
pub use wsf::{decode_wsf, encode_wsf, read_wsf, write_wsf, WSF_MAGIC};

use crate::error::Result;

pub fn new_feature(
    spec: &WeightSpaceSpec,
    channels: usize,
    init: InitKind,
) -> Result<WeightSpaceFeature> {
    WeightSpaceFeature::new(spec, channels, init)
}

pub fn concat_channels(
    a: &WeightSpaceFeature,
    b: &WeightSpaceFeature,
) -> Result<WeightSpaceFeature> {
    WeightSpaceFeature::concat_channels(a, b)
}
