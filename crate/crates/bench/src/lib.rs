//! Fixtures shared by the benchmarks.

use nfkit::{InitKind, WeightSpaceFeature, WeightSpaceSpec};

/// A SIREN-shaped weight space `[2, h, h, 1]`.
pub fn siren_space(h: usize) -> WeightSpaceSpec {
    WeightSpaceSpec::mlp(&[2, h, h, 1]).expect("positive widths")
}

pub fn feature(spec: &WeightSpaceSpec, channels: usize, seed: u64) -> WeightSpaceFeature {
    WeightSpaceFeature::new(spec, channels, InitKind::UniformFanIn { seed }).expect("valid spec")
}
