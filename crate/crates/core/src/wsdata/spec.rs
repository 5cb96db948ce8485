use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Fc,
    Conv1d,
    Conv2d,
}

impl LayerKind {
    pub fn is_conv(self) -> bool {
        !matches!(self, LayerKind::Fc)
    }
}

/// One weight layer: `n_out x n_in` neurons (or channels for conv), plus the
/// spatial filter shape for convolutions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerDesc {
    pub kind: LayerKind,
    pub n_out: usize,
    pub n_in: usize,
    #[serde(default)]
    pub filter: Vec<usize>,
}

impl LayerDesc {
    pub fn fc(n_out: usize, n_in: usize) -> Self {
        LayerDesc {
            kind: LayerKind::Fc,
            n_out,
            n_in,
            filter: Vec::new(),
        }
    }

    pub fn conv1d(n_out: usize, n_in: usize, width: usize) -> Self {
        LayerDesc {
            kind: LayerKind::Conv1d,
            n_out,
            n_in,
            filter: vec![width],
        }
    }

    pub fn conv2d(n_out: usize, n_in: usize, h: usize, w: usize) -> Self {
        LayerDesc {
            kind: LayerKind::Conv2d,
            n_out,
            n_in,
            filter: vec![h, w],
        }
    }

    /// Number of spatial filter positions (1 for fully connected layers).
    pub fn filter_size(&self) -> usize {
        self.filter.iter().product()
    }
}

#[derive(Deserialize)]
struct RawSpec {
    layers: Vec<LayerDesc>,
    #[serde(default)]
    pooled_transition: bool,
}

/// Architecture descriptor defining a weight space: neuron counts
/// `n_0, ..., n_L` and per-layer filter shapes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct WeightSpaceSpec {
    layers: Vec<LayerDesc>,
    pooled_transition: bool,
}

impl TryFrom<RawSpec> for WeightSpaceSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        WeightSpaceSpec::new(raw.layers, raw.pooled_transition)
    }
}

impl WeightSpaceSpec {
    pub fn new(layers: Vec<LayerDesc>, pooled_transition: bool) -> Result<Self> {
        ensure!(!layers.is_empty(), "weight space needs at least one layer");
        for (i, layer) in layers.iter().enumerate() {
            ensure!(
                layer.n_out > 0 && layer.n_in > 0,
                "layer {i}: neuron counts must be positive"
            );
            match layer.kind {
                LayerKind::Fc => ensure!(
                    layer.filter.is_empty(),
                    "layer {i}: fc layer cannot carry a filter shape"
                ),
                LayerKind::Conv1d => ensure!(
                    layer.filter.len() == 1,
                    "layer {i}: conv1d needs exactly one filter extent"
                ),
                LayerKind::Conv2d => ensure!(
                    layer.filter.len() == 2,
                    "layer {i}: conv2d needs exactly two filter extents"
                ),
            }
            ensure!(
                layer.filter.iter().all(|&f| f > 0),
                "layer {i}: filter extents must be positive"
            );
            if i > 0 {
                let prev = &layers[i - 1];
                ensure!(
                    layer.n_in == prev.n_out,
                    "layer {i}: n_in = {} does not match previous n_out = {}",
                    layer.n_in,
                    prev.n_out
                );
                if prev.kind.is_conv() && !layer.kind.is_conv() {
                    ensure!(
                        pooled_transition,
                        "layer {i}: conv -> fc transition requires pooled_transition"
                    );
                }
            }
        }
        Ok(WeightSpaceSpec {
            layers,
            pooled_transition,
        })
    }

    /// Fully connected spec from the neuron counts `n_0, ..., n_L`.
    pub fn mlp(neurons: &[usize]) -> Result<Self> {
        ensure!(neurons.len() >= 2, "need at least n_0 and n_1");
        let layers = neurons
            .windows(2)
            .map(|w| LayerDesc::fc(w[1], w[0]))
            .collect();
        WeightSpaceSpec::new(layers, false)
    }

    pub fn layers(&self) -> &[LayerDesc] {
        &self.layers
    }

    pub fn pooled_transition(&self) -> bool {
        self.pooled_transition
    }

    /// Number of weight layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Neuron count `n_l` for neuron layer `l` in `0..=L`.
    pub fn neurons(&self, l: usize) -> usize {
        if l == 0 {
            self.layers[0].n_in
        } else {
            self.layers[l - 1].n_out
        }
    }

    pub fn neuron_counts(&self) -> Vec<usize> {
        (0..=self.num_layers()).map(|l| self.neurons(l)).collect()
    }

    pub fn filter_size(&self, i: usize) -> usize {
        self.layers[i].filter_size()
    }

    /// Scalar entries of weight layer `i` (0-based) per channel.
    pub fn weight_len(&self, i: usize) -> usize {
        let l = &self.layers[i];
        l.n_out * l.n_in * l.filter_size()
    }

    pub fn bias_len(&self, i: usize) -> usize {
        self.layers[i].n_out
    }

    /// `dim(U)`: total number of scalars in a single-channel feature.
    pub fn dim(&self) -> usize {
        (0..self.num_layers())
            .map(|i| self.weight_len(i) + self.bias_len(i))
            .sum()
    }

    pub fn has_conv(&self) -> bool {
        self.layers.iter().any(|l| l.kind.is_conv())
    }

    /// Same neuron counts with every layer fully connected.
    pub fn to_fc(&self) -> WeightSpaceSpec {
        WeightSpaceSpec {
            layers: self
                .layers
                .iter()
                .map(|l| LayerDesc::fc(l.n_out, l.n_in))
                .collect(),
            pooled_transition: false,
        }
    }

    pub fn same_dims(&self, other: &WeightSpaceSpec) -> bool {
        self.layers == other.layers
    }
}
