use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::WeightSpaceSpec;
use crate::error::{ensure, Error, Result};

/// Initialization for [`WeightSpaceFeature::new`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitKind {
    Zeros,
    /// Entries i.i.d. uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, with
    /// `fan_in = n_{i-1} * filter_size` for weights and 1 for biases.
    UniformFanIn {
        seed: u64,
    },
}

/// A `c`-channel element of a weight space.
///
/// Weight layer `i` is stored row-major with shape `(n_i, n_{i-1}, filter, c)`
/// (filter size 1 for fc layers), biases with shape `(n_i, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSpaceFeature {
    spec: WeightSpaceSpec,
    channels: usize,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl WeightSpaceFeature {
    pub fn new(spec: &WeightSpaceSpec, channels: usize, init: InitKind) -> Result<Self> {
        ensure!(channels >= 1, "channel count must be at least 1");
        let mut feat = Self::zeros_unchecked(spec, channels);
        if let InitKind::UniformFanIn { seed } = init {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..spec.num_layers() {
                let layer = &spec.layers()[i];
                let bound = 1.0 / ((layer.n_in * layer.filter_size()) as f64).sqrt();
                for x in feat.weights[i].iter_mut() {
                    *x = rng.gen_range(-bound..=bound);
                }
            }
            for b in feat.biases.iter_mut() {
                for x in b.iter_mut() {
                    *x = rng.gen_range(-1.0..=1.0);
                }
            }
        }
        Ok(feat)
    }

    pub fn zeros(spec: &WeightSpaceSpec, channels: usize) -> Result<Self> {
        Self::new(spec, channels, InitKind::Zeros)
    }

    pub(crate) fn zeros_unchecked(spec: &WeightSpaceSpec, channels: usize) -> Self {
        let l = spec.num_layers();
        WeightSpaceFeature {
            spec: spec.clone(),
            channels,
            weights: (0..l)
                .map(|i| vec![0.0; spec.weight_len(i) * channels])
                .collect(),
            biases: (0..l)
                .map(|i| vec![0.0; spec.bias_len(i) * channels])
                .collect(),
        }
    }

    /// Builds a feature from raw per-layer arrays, validating shapes and finiteness.
    pub fn from_parts(
        spec: &WeightSpaceSpec,
        channels: usize,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        ensure!(channels >= 1, "channel count must be at least 1");
        let l = spec.num_layers();
        ensure!(
            weights.len() == l && biases.len() == l,
            "expected {l} weight and bias arrays"
        );
        for i in 0..l {
            ensure!(
                weights[i].len() == spec.weight_len(i) * channels,
                "weight array {i} has {} entries, expected {}",
                weights[i].len(),
                spec.weight_len(i) * channels
            );
            ensure!(
                biases[i].len() == spec.bias_len(i) * channels,
                "bias array {i} has {} entries, expected {}",
                biases[i].len(),
                spec.bias_len(i) * channels
            );
        }
        let feat = WeightSpaceFeature {
            spec: spec.clone(),
            channels,
            weights,
            biases,
        };
        feat.check_finite()?;
        Ok(feat)
    }

    /// Single-channel fc feature from nested `W[i][j][k]` and `b[i][j]` arrays.
    pub fn from_matrices(weights: &[Vec<Vec<f64>>], biases: &[Vec<f64>]) -> Result<Self> {
        ensure!(!weights.is_empty(), "need at least one layer");
        let mut neurons = vec![weights[0].first().map_or(0, |r| r.len())];
        for w in weights {
            neurons.push(w.len());
        }
        let spec = WeightSpaceSpec::mlp(&neurons)?;
        let flat_w = weights
            .iter()
            .map(|w| w.iter().flatten().copied().collect())
            .collect();
        Self::from_parts(&spec, 1, flat_w, biases.to_vec())
    }

    pub fn spec(&self) -> &WeightSpaceSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    pub fn weight_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.weights[i]
    }

    pub fn bias(&self, i: usize) -> &[f64] {
        &self.biases[i]
    }

    pub fn bias_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.biases[i]
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// All arrays in flatten order: weights, then biases.
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .chain(&self.biases)
            .map(Vec::as_slice)
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .map(Vec::as_mut_slice)
            .collect()
    }

    /// Offset of `W_i[j, k, f, ch]` within `weight(i)`.
    pub fn weight_offset(&self, i: usize, j: usize, k: usize, f: usize, ch: usize) -> usize {
        let layer = &self.spec.layers()[i];
        let s = layer.filter_size();
        ((j * layer.n_in + k) * s + f) * self.channels + ch
    }

    pub fn w(&self, i: usize, j: usize, k: usize) -> f64 {
        self.weights[i][self.weight_offset(i, j, k, 0, 0)]
    }

    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.biases[i][j * self.channels]
    }

    pub fn len(&self) -> usize {
        self.spec.dim() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.biases.iter()).flatten()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flatten()
    }

    /// Canonical vectorization: weights of layers 1..L, then biases of layers 1..L,
    /// each row-major over `(j, k, filter, channel)`.
    pub fn flatten(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn unflatten(spec: &WeightSpaceSpec, channels: usize, data: &[f64]) -> Result<Self> {
        ensure!(channels >= 1, "channel count must be at least 1");
        let expected = spec.dim() * channels;
        ensure!(
            data.len() == expected,
            "vector length {} does not match channels * dim(U) = {expected}",
            data.len()
        );
        let mut feat = Self::zeros_unchecked(spec, channels);
        for (dst, &src) in feat.iter_mut().zip(data) {
            *dst = src;
        }
        Ok(feat)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(
                "weight-space feature contains NaN or Inf".into(),
            ))
        }
    }

    pub fn same_shape(&self, other: &WeightSpaceFeature) -> bool {
        self.channels == other.channels && self.spec.same_dims(&other.spec)
    }

    /// Concatenates channels; `a`'s channels come first.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        ensure!(
            a.spec.same_dims(&b.spec),
            "cannot concatenate features of different weight spaces"
        );
        let c = a.channels + b.channels;
        let cat = |xa: &[f64], xb: &[f64]| {
            let mut out = Vec::with_capacity(xa.len() + xb.len());
            for (ra, rb) in xa.chunks(a.channels).zip(xb.chunks(b.channels)) {
                out.extend_from_slice(ra);
                out.extend_from_slice(rb);
            }
            out
        };
        Ok(WeightSpaceFeature {
            spec: a.spec.clone(),
            channels: c,
            weights: a
                .weights
                .iter()
                .zip(&b.weights)
                .map(|(x, y)| cat(x, y))
                .collect(),
            biases: a
                .biases
                .iter()
                .zip(&b.biases)
                .map(|(x, y)| cat(x, y))
                .collect(),
        })
    }

    /// Channels `start..start + count` as a new feature.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        ensure!(
            count >= 1 && start + count <= self.channels,
            "channel range {start}..{} out of bounds for {} channels",
            start + count,
            self.channels
        );
        let take = |x: &[f64]| {
            x.chunks(self.channels)
                .flat_map(|r| r[start..start + count].iter().copied())
                .collect()
        };
        Ok(WeightSpaceFeature {
            spec: self.spec.clone(),
            channels: count,
            weights: self.weights.iter().map(|w| take(w)).collect(),
            biases: self.biases.iter().map(|b| take(b)).collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.iter_mut().for_each(|x| *x = f(*x));
        out
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|x| alpha * x)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        ensure!(self.same_shape(other), "feature shape mismatch in axpy");
        for (x, y) in self.iter_mut().zip(other.iter()) {
            *x += alpha * y;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }
}
