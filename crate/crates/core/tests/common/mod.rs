#![allow(dead_code)]

use nfkit::selftest::random_spec;
use nfkit::{WeightSpaceFeature, WeightSpaceSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn mlp(n: &[usize]) -> WeightSpaceSpec {
    WeightSpaceSpec::mlp(n).unwrap()
}

pub fn spec_from_seed(seed: u64) -> WeightSpaceSpec {
    random_spec(&mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn feature(spec: &WeightSpaceSpec, channels: usize, seed: u64) -> WeightSpaceFeature {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = WeightSpaceFeature::zeros(spec, channels).unwrap();
    f.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    f
}

/// The 1-2-1 network used throughout the worked examples.
pub fn example_121() -> WeightSpaceFeature {
    WeightSpaceFeature::from_matrices(
        &[vec![vec![1.0], vec![2.0]], vec![vec![3.0, 4.0]]],
        &[vec![5.0, 6.0], vec![7.0]],
    )
    .unwrap()
}
