use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::feature::WeightSpaceFeature;
use super::spec::WeightSpaceSpec;
use crate::error::{ensure, Result};

/// Which neuron permutation group acts on the weight space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupTag {
    /// Every layer permutable, including inputs and outputs.
    Np,
    /// Hidden layers only; input and output neurons are fixed.
    Hnp,
}

impl GroupTag {
    /// Whether neuron layer `l` of an `L`-layer network is permuted by this group.
    pub fn permutable(self, l: usize, num_layers: usize) -> bool {
        match self {
            GroupTag::Np => true,
            GroupTag::Hnp => l != 0 && l != num_layers,
        }
    }
}

impl std::fmt::Display for GroupTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GroupTag::Np => "np",
            GroupTag::Hnp => "hnp",
        })
    }
}

impl std::str::FromStr for GroupTag {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "np" => Ok(GroupTag::Np),
            "hnp" => Ok(GroupTag::Hnp),
            other => Err(crate::Error::invalid(format!("unknown group '{other}'"))),
        }
    }
}

/// One permutation per neuron layer, `sigmas[l]` acting on `0..n_l`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronPermutation {
    sigmas: Vec<Vec<usize>>,
    group: GroupTag,
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &x in p {
        if x >= p.len() || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

fn is_identity(p: &[usize]) -> bool {
    p.iter().enumerate().all(|(i, &x)| i == x)
}

impl NeuronPermutation {
    pub fn new(sigmas: Vec<Vec<usize>>, group: GroupTag) -> Result<Self> {
        ensure!(
            sigmas.len() >= 2,
            "need permutations for at least two neuron layers"
        );
        for (l, s) in sigmas.iter().enumerate() {
            ensure!(is_permutation(s), "sigma[{l}] is not a permutation");
        }
        let last = sigmas.len() - 1;
        if group == GroupTag::Hnp {
            ensure!(
                is_identity(&sigmas[0]) && is_identity(&sigmas[last]),
                "HNP permutation must fix input and output neurons"
            );
        }
        Ok(NeuronPermutation { sigmas, group })
    }

    pub fn identity(spec: &WeightSpaceSpec, group: GroupTag) -> Self {
        NeuronPermutation {
            sigmas: spec
                .neuron_counts()
                .into_iter()
                .map(|n| (0..n).collect())
                .collect(),
            group,
        }
    }

    /// Uniformly random element of the group (Fisher-Yates per permutable layer).
    pub fn random(spec: &WeightSpaceSpec, group: GroupTag, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let num_layers = spec.num_layers();
        let sigmas = spec
            .neuron_counts()
            .into_iter()
            .enumerate()
            .map(|(l, n)| {
                let mut p: Vec<usize> = (0..n).collect();
                if group.permutable(l, num_layers) {
                    p.shuffle(&mut rng);
                }
                p
            })
            .collect();
        NeuronPermutation { sigmas, group }
    }

    pub fn sigmas(&self) -> &[Vec<usize>] {
        &self.sigmas
    }

    pub fn group(&self) -> GroupTag {
        self.group
    }

    pub fn is_identity(&self) -> bool {
        self.sigmas.iter().all(|s| is_identity(s))
    }

    /// Whether the boundary (input/output) permutations are non-trivial.
    pub fn moves_boundary(&self) -> bool {
        !is_identity(&self.sigmas[0]) || !is_identity(self.sigmas.last().unwrap())
    }

    pub fn inverse(&self) -> Self {
        let sigmas = self
            .sigmas
            .iter()
            .map(|s| {
                let mut inv = vec![0; s.len()];
                for (i, &x) in s.iter().enumerate() {
                    inv[x] = i;
                }
                inv
            })
            .collect();
        NeuronPermutation {
            sigmas,
            group: self.group,
        }
    }

    /// `self ∘ other`: acting with the result equals acting with `other`, then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        ensure!(
            self.sigmas.len() == other.sigmas.len()
                && self
                    .sigmas
                    .iter()
                    .zip(&other.sigmas)
                    .all(|(a, b)| a.len() == b.len()),
            "cannot compose permutations of different weight spaces"
        );
        let group = if self.group == GroupTag::Hnp && other.group == GroupTag::Hnp {
            GroupTag::Hnp
        } else {
            GroupTag::Np
        };
        let sigmas = self
            .sigmas
            .iter()
            .zip(&other.sigmas)
            .map(|(s, t)| t.iter().map(|&x| s[x]).collect())
            .collect();
        Ok(NeuronPermutation { sigmas, group })
    }

    fn check_against(&self, spec: &WeightSpaceSpec) -> Result<()> {
        let counts = spec.neuron_counts();
        ensure!(
            counts.len() == self.sigmas.len()
                && counts.iter().zip(&self.sigmas).all(|(&n, s)| n == s.len()),
            "permutation dims {:?} do not match weight space {:?}",
            self.sigmas.iter().map(Vec::len).collect::<Vec<_>>(),
            counts
        );
        if self.group == GroupTag::Hnp {
            ensure!(
                !self.moves_boundary(),
                "HNP permutation must fix input and output neurons"
            );
        }
        Ok(())
    }

    /// Applies the group action: `out[i][j, k] = in[i][σ_i⁻¹(j), σ_{i-1}⁻¹(k)]`
    /// and `out_bias[i][j] = in_bias[i][σ_i⁻¹(j)]`; filter and channel axes ride along.
    pub fn apply(&self, feat: &WeightSpaceFeature) -> Result<WeightSpaceFeature> {
        self.check_against(feat.spec())?;
        let spec = feat.spec();
        let c = feat.channels();
        let mut out = WeightSpaceFeature::zeros_unchecked(spec, c);
        for (i, layer) in spec.layers().iter().enumerate() {
            let row = &self.sigmas[i + 1];
            let col = &self.sigmas[i];
            let block = layer.filter_size() * c;
            let src = feat.weight(i);
            let dst = out.weight_mut(i);
            for (j, &rj) in row.iter().enumerate() {
                for (k, &ck) in col.iter().enumerate() {
                    let s = (j * layer.n_in + k) * block;
                    let d = (rj * layer.n_in + ck) * block;
                    dst[d..d + block].copy_from_slice(&src[s..s + block]);
                }
            }
            let src = feat.bias(i);
            let dst = out.bias_mut(i);
            for j in 0..layer.n_out {
                dst[row[j] * c..(row[j] + 1) * c].copy_from_slice(&src[j * c..(j + 1) * c]);
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`NeuronPermutation::apply`].
pub fn apply_action(
    perm: &NeuronPermutation,
    feat: &WeightSpaceFeature,
) -> Result<WeightSpaceFeature> {
    perm.apply(feat)
}

pub fn random_permutation(spec: &WeightSpaceSpec, group: GroupTag, seed: u64) -> NeuronPermutation {
    NeuronPermutation::random(spec, group, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wsdata::InitKind;

    fn example121() -> WeightSpaceFeature {
        WeightSpaceFeature::from_matrices(
            &[vec![vec![1.0], vec![2.0]], vec![vec![3.0, 4.0]]],
            &[vec![5.0, 6.0], vec![7.0]],
        )
        .unwrap()
    }

    #[test]
    fn swap_hidden_neurons() {
        let f = example121();
        let perm =
            NeuronPermutation::new(vec![vec![0], vec![1, 0], vec![0]], GroupTag::Hnp).unwrap();
        let g = perm.apply(&f).unwrap();
        assert_eq!(g.flatten(), vec![2., 1., 4., 3., 6., 5., 7.]);
    }

    #[test]
    fn identity_is_noop() {
        let spec = WeightSpaceSpec::mlp(&[3, 4, 2]).unwrap();
        let f = WeightSpaceFeature::new(&spec, 2, InitKind::UniformFanIn { seed: 1 }).unwrap();
        let id = NeuronPermutation::identity(&spec, GroupTag::Np);
        assert_eq!(id.apply(&f).unwrap(), f);
    }

    #[test]
    fn inverse_roundtrip_bit_exact() {
        let spec = WeightSpaceSpec::mlp(&[3, 4, 5, 2]).unwrap();
        let f = WeightSpaceFeature::new(&spec, 3, InitKind::UniformFanIn { seed: 3 }).unwrap();
        let p = NeuronPermutation::random(&spec, GroupTag::Np, 11);
        let back = p.apply(&p.inverse().apply(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn random_respects_group() {
        let spec = WeightSpaceSpec::mlp(&[3, 4, 2]).unwrap();
        for seed in 0..20 {
            let p = NeuronPermutation::random(&spec, GroupTag::Hnp, seed);
            assert!(!p.moves_boundary());
        }
        let trivial = WeightSpaceSpec::mlp(&[1, 1, 1]).unwrap();
        assert!(NeuronPermutation::random(&trivial, GroupTag::Np, 5).is_identity());
        assert_eq!(
            NeuronPermutation::random(&spec, GroupTag::Np, 9),
            NeuronPermutation::random(&spec, GroupTag::Np, 9)
        );
    }

    #[test]
    fn rejects_bad_permutations() {
        assert!(NeuronPermutation::new(vec![vec![0, 0], vec![0]], GroupTag::Np).is_err());
        assert!(NeuronPermutation::new(vec![vec![1, 0], vec![0]], GroupTag::Hnp).is_err());
        let spec = WeightSpaceSpec::mlp(&[2, 3, 1]).unwrap();
        let f = WeightSpaceFeature::zeros(&spec, 1).unwrap();
        let wrong =
            NeuronPermutation::identity(&WeightSpaceSpec::mlp(&[2, 2, 1]).unwrap(), GroupTag::Np);
        assert!(wrong.apply(&f).is_err());
    }
}
