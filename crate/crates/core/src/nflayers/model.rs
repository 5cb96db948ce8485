use serde::{Deserialize, Serialize};

use super::equivariant::{EquivariantLayer, LayerFamily};
use super::io::{IoEncoder, IoEncodingConfig};
use super::mlp::{Mlp, MlpCache};
use super::pool::{invariant_pool, invariant_pool_backward, pooled_len, PoolKind};
use crate::error::{ensure, Error, Result};
use crate::wsdata::{WeightSpaceFeature, WeightSpaceSpec};

/// What the network produces after its last NF-Layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskHead {
    /// One logit; the probability is its sigmoid.
    ScalarSigmoid,
    /// `classes` logits.
    ClassLogits { classes: usize },
    /// The last NF-Layer output itself; no pooling.
    EquivariantOutput,
    /// The pooled vector, no MLP.
    PooledFeatures,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub pool: PoolKind,
    #[serde(default)]
    pub mlp_hidden: Vec<usize>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NfnConfig {
    pub spec: WeightSpaceSpec,
    #[serde(default = "one")]
    pub in_channels: usize,
    pub layer_kind: LayerFamily,
    /// Output channels of each NF-Layer; `depth = channels.len() - 1` layers
    /// are followed by ReLU.
    pub channels: Vec<usize>,
    #[serde(default)]
    pub io_encoding: Option<IoEncodingConfig>,
    #[serde(default)]
    pub head: Option<HeadConfig>,
    pub task_head: TaskHead,
    #[serde(default)]
    pub seed: u64,
}

impl NfnConfig {
    /// An invariant classifier/regressor with the pool matching the layer family.
    pub fn invariant(
        spec: &WeightSpaceSpec,
        layer_kind: LayerFamily,
        channels: Vec<usize>,
        mlp_hidden: Vec<usize>,
        task_head: TaskHead,
        seed: u64,
    ) -> Self {
        let pool = match layer_kind {
            LayerFamily::Hnp => PoolKind::Hnp,
            _ => PoolKind::Np,
        };
        NfnConfig {
            spec: spec.clone(),
            in_channels: 1,
            layer_kind,
            channels,
            io_encoding: None,
            head: Some(HeadConfig { pool, mlp_hidden }),
            task_head,
            seed,
        }
    }

    /// A feature-to-feature network whose last layer has `out_channels`.
    pub fn equivariant(
        spec: &WeightSpaceSpec,
        layer_kind: LayerFamily,
        channels: Vec<usize>,
        seed: u64,
    ) -> Self {
        NfnConfig {
            spec: spec.clone(),
            in_channels: 1,
            layer_kind,
            channels,
            io_encoding: None,
            head: None,
            task_head: TaskHead::EquivariantOutput,
            seed,
        }
    }

    pub fn depth(&self) -> usize {
        self.channels.len().saturating_sub(1)
    }

    pub fn output_dim(&self) -> Option<usize> {
        match &self.task_head {
            TaskHead::ScalarSigmoid => Some(1),
            TaskHead::ClassLogits { classes } => Some(*classes),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.channels.is_empty(),
            "an NFN needs at least one NF-Layer"
        );
        ensure!(
            self.channels.iter().all(|&c| c > 0),
            "channel widths must be positive"
        );
        ensure!(self.in_channels > 0, "in_channels must be positive");
        match (&self.task_head, &self.head) {
            (TaskHead::EquivariantOutput, Some(_)) => {
                return Err(Error::invalid(
                    "an equivariant-output network has no invariant head",
                ))
            }
            (TaskHead::EquivariantOutput, None) => {}
            (_, None) => {
                return Err(Error::invalid(
                    "invariant task heads need a pool/MLP head config",
                ))
            }
            (TaskHead::PooledFeatures, Some(h)) => {
                ensure!(h.mlp_hidden.is_empty(), "pooled-features head takes no MLP")
            }
            (TaskHead::ClassLogits { classes }, Some(_)) => {
                ensure!(*classes >= 2, "class logits need at least two classes")
            }
            _ => {}
        }
        if let Some(h) = &self.head {
            ensure!(
                h.mlp_hidden.iter().all(|&w| w > 0),
                "MLP widths must be positive"
            );
        }
        if let Some(io) = &self.io_encoding {
            ensure!(io.num_bands >= 1, "io encoding needs at least one band");
            ensure!(
                io.max_freq >= 1.0 && io.max_freq.is_finite(),
                "max_freq must be finite and >= 1"
            );
        }
        Ok(())
    }

    fn first_channels(&self) -> usize {
        self.in_channels + self.io_encoding.map_or(0, |c| c.dim())
    }
}

/// A neural functional network: NF-Layers with ReLU, then a head.
#[derive(Clone, Debug)]
pub struct Nfn {
    config: NfnConfig,
    io: Option<IoEncoder>,
    layers: Vec<EquivariantLayer>,
    mlp: Option<Mlp>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NfnOutput {
    Vector(Vec<f64>),
    Feature(WeightSpaceFeature),
}

impl NfnOutput {
    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            NfnOutput::Vector(v) => Some(v),
            NfnOutput::Feature(_) => None,
        }
    }

    pub fn feature(&self) -> Option<&WeightSpaceFeature> {
        match self {
            NfnOutput::Feature(f) => Some(f),
            NfnOutput::Vector(_) => None,
        }
    }

    pub fn into_vector(self) -> Option<Vec<f64>> {
        match self {
            NfnOutput::Vector(v) => Some(v),
            NfnOutput::Feature(_) => None,
        }
    }

    pub fn into_feature(self) -> Option<WeightSpaceFeature> {
        match self {
            NfnOutput::Feature(f) => Some(f),
            NfnOutput::Vector(_) => None,
        }
    }
}

/// Forward intermediates needed by [`Nfn::backward`].
#[derive(Clone, Debug)]
pub struct NfnCache {
    /// Input of every NF-Layer (after encoding / ReLU).
    inputs: Vec<WeightSpaceFeature>,
    /// Output of every NF-Layer before the ReLU.
    pre: Vec<WeightSpaceFeature>,
    mlp: Option<MlpCache>,
    output: NfnOutput,
}

impl NfnCache {
    pub fn output(&self) -> &NfnOutput {
        &self.output
    }
}

fn relu(f: &WeightSpaceFeature) -> WeightSpaceFeature {
    f.map(|v| v.max(0.0))
}

impl Nfn {
    pub fn new(config: NfnConfig) -> Result<Self> {
        config.validate()?;
        let spec = &config.spec;
        let io = config.io_encoding.map(|c| IoEncoder::new(spec, c));
        let mut layers = Vec::with_capacity(config.channels.len());
        let mut c_in = config.first_channels();
        for (i, &c_out) in config.channels.iter().enumerate() {
            let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            layers.push(EquivariantLayer::init(
                spec,
                config.layer_kind,
                c_in,
                c_out,
                seed,
            )?);
            c_in = c_out;
        }
        let mlp = match (&config.head, config.output_dim()) {
            (Some(h), Some(out)) => {
                let l = spec.num_layers();
                let plen = pooled_len(l, spec.neurons(0), spec.neurons(l), c_in, h.pool);
                let mut sizes = vec![plen];
                sizes.extend(&h.mlp_hidden);
                sizes.push(out);
                Some(Mlp::init(&sizes, config.seed.wrapping_add(0x5eed))?)
            }
            _ => None,
        };
        Ok(Nfn {
            config,
            io,
            layers,
            mlp,
        })
    }

    /// Replaces every NF-Layer; shapes must match the configuration.
    pub fn with_layers(mut self, layers: Vec<EquivariantLayer>) -> Result<Self> {
        ensure!(layers.len() == self.layers.len(), "layer count mismatch");
        for (new, old) in layers.iter().zip(&self.layers) {
            ensure!(
                new.family() == old.family()
                    && new.c_in() == old.c_in()
                    && new.c_out() == old.c_out(),
                "replacement layer has a different shape"
            );
        }
        self.layers = layers;
        Ok(self)
    }

    pub fn config(&self) -> &NfnConfig {
        &self.config
    }

    pub fn spec(&self) -> &WeightSpaceSpec {
        &self.config.spec
    }

    pub fn layers(&self) -> &[EquivariantLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [EquivariantLayer] {
        &mut self.layers
    }

    pub fn io_encoder(&self) -> Option<&IoEncoder> {
        self.io.as_ref()
    }

    pub fn mlp(&self) -> Option<&Mlp> {
        self.mlp.as_ref()
    }

    pub fn mlp_mut(&mut self) -> Option<&mut Mlp> {
        self.mlp.as_mut()
    }

    /// Parameter blocks in declaration order: learned io tables, NF-Layer
    /// terms layer by layer, then MLP `[W, b]` pairs.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.io.as_ref().map(|e| e.params()).unwrap_or_default();
        for l in &self.layers {
            out.extend(l.params().iter().map(Vec::as_slice));
        }
        if let Some(m) = &self.mlp {
            out.extend(m.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.io.as_mut().map(|e| e.params_mut()).unwrap_or_default();
        for l in &mut self.layers {
            out.extend(l.params_mut().iter_mut().map(Vec::as_mut_slice));
        }
        if let Some(m) = &mut self.mlp {
            out.extend(m.params_mut());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    fn check_input(&self, x: &WeightSpaceFeature) -> Result<()> {
        ensure!(
            x.spec().same_dims(self.spec()),
            "input feature does not belong to the model's weight space"
        );
        ensure!(
            x.channels() == self.config.in_channels,
            "input has {} channels, model expects {}",
            x.channels(),
            self.config.in_channels
        );
        Ok(())
    }

    pub fn forward_cached(&self, x: &WeightSpaceFeature) -> Result<NfnCache> {
        self.check_input(x)?;
        let mut h = match &self.io {
            Some(enc) => enc.encode(x)?,
            None => x.clone(),
        };
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer.forward_unchecked(&h);
            inputs.push(h);
            h = if i < last { relu(&y) } else { y.clone() };
            pre.push(y);
        }
        let (mlp, output) = match (&self.config.head, &self.mlp) {
            (None, _) => (None, NfnOutput::Feature(h)),
            (Some(hc), None) => (None, NfnOutput::Vector(invariant_pool(&h, hc.pool))),
            (Some(hc), Some(m)) => {
                let cache = m.forward_cached(&invariant_pool(&h, hc.pool))?;
                let out = cache.output().to_vec();
                (Some(cache), NfnOutput::Vector(out))
            }
        };
        Ok(NfnCache {
            inputs,
            pre,
            mlp,
            output,
        })
    }

    pub fn forward(&self, x: &WeightSpaceFeature) -> Result<NfnOutput> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Accumulates parameter gradients (ordered as [`Self::params`]) and
    /// returns the gradient with respect to the input feature.
    pub fn backward(
        &self,
        cache: &NfnCache,
        dout: &NfnOutput,
        grads: &mut [Vec<f64>],
    ) -> Result<WeightSpaceFeature> {
        ensure!(
            grads.len() == self.params().len(),
            "gradient buffer mismatch"
        );
        let io_blocks = self.io.as_ref().map_or(0, |e| e.params().len());
        let (io_grads, rest) = grads.split_at_mut(io_blocks);
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        let mut rest = rest;
        for l in &self.layers {
            let (g, r) = rest.split_at_mut(l.params().len());
            layer_grads.push(g);
            rest = r;
        }
        let mlp_grads = rest;

        let last_out = self.layers.len() - 1;
        let mut dh = match (&self.config.head, dout) {
            (None, NfnOutput::Feature(f)) => {
                ensure!(
                    f.channels() == self.layers[last_out].c_out()
                        && f.spec().same_dims(self.spec()),
                    "output gradient shape mismatch"
                );
                f.clone()
            }
            (Some(hc), NfnOutput::Vector(v)) => {
                let dpooled = match (&self.mlp, &cache.mlp) {
                    (Some(m), Some(mc)) => m.backward(mc, v, mlp_grads)?,
                    _ => v.clone(),
                };
                invariant_pool_backward(&cache.pre[last_out], hc.pool, &dpooled)?
            }
            _ => {
                return Err(Error::invalid(
                    "output gradient kind does not match the task head",
                ))
            }
        };
        for i in (0..self.layers.len()).rev() {
            if i < last_out {
                for (d, z) in dh.iter_mut().zip(cache.pre[i].iter()) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dh = self.layers[i].backward(&cache.inputs[i], &dh, layer_grads[i])?;
        }
        match &self.io {
            Some(enc) => enc.backward(&dh, io_grads),
            None => Ok(dh),
        }
    }
}

/// Single NP layer forward pass.
pub fn np_forward(
    layer: &EquivariantLayer,
    feat: &WeightSpaceFeature,
) -> Result<WeightSpaceFeature> {
    ensure!(
        layer.family() == LayerFamily::Np,
        "np_forward needs an NP layer"
    );
    layer.forward(feat)
}

/// Single HNP layer forward pass.
pub fn hnp_forward(
    layer: &EquivariantLayer,
    feat: &WeightSpaceFeature,
) -> Result<WeightSpaceFeature> {
    ensure!(
        layer.family() == LayerFamily::Hnp,
        "hnp_forward needs an HNP layer"
    );
    layer.forward(feat)
}

/// Single pointwise layer forward pass.
pub fn pointwise_forward(
    layer: &EquivariantLayer,
    feat: &WeightSpaceFeature,
) -> Result<WeightSpaceFeature> {
    ensure!(
        layer.family() == LayerFamily::Pointwise,
        "pointwise_forward needs a pointwise layer"
    );
    layer.forward(feat)
}

pub fn build_nfn(cfg: NfnConfig) -> Result<Nfn> {
    Nfn::new(cfg)
}

pub fn nfn_forward(model: &Nfn, feat: &WeightSpaceFeature) -> Result<NfnOutput> {
    model.forward(feat)
}
