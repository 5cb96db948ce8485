//! Positional encodings attached to the input columns of `W_1` and the output
//! rows of `W_L` / `b_L`, breaking the permutation symmetry of the boundary
//! neurons while leaving hidden neurons permutable.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::wsdata::{WeightSpaceFeature, WeightSpaceSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    FixedSinusoidal,
    Learned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IoEncodingConfig {
    pub num_bands: usize,
    pub max_freq: f64,
    pub mode: EncodingMode,
}

impl Default for IoEncodingConfig {
    fn default() -> Self {
        IoEncodingConfig {
            num_bands: 6,
            max_freq: 10.0,
            mode: EncodingMode::FixedSinusoidal,
        }
    }
}

impl IoEncodingConfig {
    /// Channels appended by the encoding: `1 + 2 * num_bands`.
    pub fn dim(&self) -> usize {
        1 + 2 * self.num_bands
    }

    /// Band frequencies `pi * 2^t` with `t` evenly spaced on `[0, log2(max_freq)]`.
    pub fn frequencies(&self) -> Vec<f64> {
        let top = self.max_freq.log2();
        (0..self.num_bands)
            .map(|b| {
                let t = if self.num_bands > 1 {
                    top * b as f64 / (self.num_bands - 1) as f64
                } else {
                    0.0
                };
                2f64.powf(t) * PI
            })
            .collect()
    }

    /// `gamma(p) = (p, sin(f_1 p), cos(f_1 p), ..., sin(f_B p), cos(f_B p))`.
    pub fn gamma(&self, p: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.push(p);
        for f in self.frequencies() {
            out.push((f * p).sin());
            out.push((f * p).cos());
        }
        out
    }
}

/// Position of index `k` among `n` evenly spaced points on `[-1, 1]`.
pub fn position(k: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * k as f64 / (n - 1) as f64
    }
}

/// The encoder: fixed sinusoidal tables, or trainable tables (initialized to
/// the sinusoidal values) in learned mode.
#[derive(Clone, Debug, PartialEq)]
pub struct IoEncoder {
    cfg: IoEncodingConfig,
    n_in: usize,
    n_out: usize,
    /// `n_0 x E` table for input columns.
    input_table: Vec<f64>,
    /// `n_L x E` table for output rows.
    output_table: Vec<f64>,
}

impl IoEncoder {
    pub fn new(spec: &WeightSpaceSpec, cfg: IoEncodingConfig) -> Self {
        let n_in = spec.neurons(0);
        let n_out = spec.neurons(spec.num_layers());
        let table = |n: usize| (0..n).flat_map(|k| cfg.gamma(position(k, n))).collect();
        IoEncoder {
            cfg,
            n_in,
            n_out,
            input_table: table(n_in),
            output_table: table(n_out),
        }
    }

    pub fn config(&self) -> &IoEncodingConfig {
        &self.cfg
    }

    pub fn is_learned(&self) -> bool {
        self.cfg.mode == EncodingMode::Learned
    }

    /// Trainable tables (empty in fixed mode).
    pub fn params(&self) -> Vec<&[f64]> {
        if self.is_learned() {
            vec![&self.input_table, &self.output_table]
        } else {
            Vec::new()
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        if self.is_learned() {
            vec![&mut self.input_table, &mut self.output_table]
        } else {
            Vec::new()
        }
    }

    /// Appends `E` encoding channels to every array. `W_1` entries in column
    /// `k` carry the input encoding of `k`; `W_L` and `b_L` entries in row `j`
    /// carry the output encoding of `j` (added to the input encoding when
    /// `L = 1`); everything else gets zeros.
    pub fn encode(&self, feat: &WeightSpaceFeature) -> Result<WeightSpaceFeature> {
        let spec = feat.spec();
        ensure!(
            spec.neurons(0) == self.n_in && spec.neurons(spec.num_layers()) == self.n_out,
            "io encoder built for a different weight space"
        );
        let enc = self.encoding_feature(spec);
        WeightSpaceFeature::concat_channels(feat, &enc)
    }

    fn encoding_feature(&self, spec: &WeightSpaceSpec) -> WeightSpaceFeature {
        let e = self.cfg.dim();
        let l = spec.num_layers();
        let mut enc = WeightSpaceFeature::zeros_unchecked(spec, e);
        let first = &spec.layers()[0];
        let s = first.filter_size();
        {
            let w = enc.weight_mut(0);
            for j in 0..first.n_out {
                for k in 0..first.n_in {
                    for f in 0..s {
                        let base = ((j * first.n_in + k) * s + f) * e;
                        for (d, v) in w[base..base + e]
                            .iter_mut()
                            .zip(&self.input_table[k * e..(k + 1) * e])
                        {
                            *d += v;
                        }
                    }
                }
            }
        }
        let last = &spec.layers()[l - 1];
        let per_row = last.n_in * last.filter_size();
        {
            let w = enc.weight_mut(l - 1);
            for j in 0..last.n_out {
                let row = &self.output_table[j * e..(j + 1) * e];
                for pos in 0..per_row {
                    let base = (j * per_row + pos) * e;
                    for (d, v) in w[base..base + e].iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }
        }
        enc.bias_mut(l - 1).copy_from_slice(&self.output_table);
        enc
    }

    /// Accumulates table gradients (learned mode) from the gradient of the
    /// encoded feature and returns the gradient of the original channels.
    pub fn backward(
        &self,
        dy: &WeightSpaceFeature,
        grads: &mut [Vec<f64>],
    ) -> Result<WeightSpaceFeature> {
        let e = self.cfg.dim();
        let c = dy.channels() - e;
        let dx = dy.slice_channels(0, c)?;
        if !self.is_learned() {
            return Ok(dx);
        }
        ensure!(
            grads.len() == 2,
            "learned io encoder has two gradient tables"
        );
        let denc = dy.slice_channels(c, e)?;
        let spec = dy.spec();
        let l = spec.num_layers();
        let first = &spec.layers()[0];
        let s = first.filter_size();
        let w = denc.weight(0);
        for j in 0..first.n_out {
            for k in 0..first.n_in {
                for f in 0..s {
                    let base = ((j * first.n_in + k) * s + f) * e;
                    for (g, v) in grads[0][k * e..(k + 1) * e]
                        .iter_mut()
                        .zip(&w[base..base + e])
                    {
                        *g += v;
                    }
                }
            }
        }
        let last = &spec.layers()[l - 1];
        let per_row = last.n_in * last.filter_size();
        let w = denc.weight(l - 1);
        for j in 0..last.n_out {
            for pos in 0..per_row {
                let base = (j * per_row + pos) * e;
                for (g, v) in grads[1][j * e..(j + 1) * e]
                    .iter_mut()
                    .zip(&w[base..base + e])
                {
                    *g += v;
                }
            }
        }
        for (g, v) in grads[1].iter_mut().zip(denc.bias(l - 1)) {
            *g += v;
        }
        Ok(dx)
    }
}

/// Appends fixed or (initial) learned positional channels to `feat`.
pub fn io_encode(feat: &WeightSpaceFeature, cfg: &IoEncodingConfig) -> Result<WeightSpaceFeature> {
    IoEncoder::new(feat.spec(), *cfg).encode(feat)
}
