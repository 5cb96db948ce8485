//! Invariant pooling layers.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::wsdata::WeightSpaceFeature;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    /// Mean of every weight and bias array: NP-invariant, length `2L * c`.
    Np,
    /// NP pooling plus the input-column profile of `W_1`, the output-row
    /// profile of `W_L`, and `b_L`: HNP-invariant, length `(2L + n_0 + 2 n_L) * c`.
    Hnp,
}

pub fn pooled_len(
    feat_layers: usize,
    n0: usize,
    nl: usize,
    channels: usize,
    kind: PoolKind,
) -> usize {
    match kind {
        PoolKind::Np => 2 * feat_layers * channels,
        PoolKind::Hnp => (2 * feat_layers + n0 + 2 * nl) * channels,
    }
}

/// Mean that does not depend on the order of its inputs: values are summed in
/// sorted order, so permuting them yields a bit-identical result.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len() as f64;
    values.into_iter().sum::<f64>() / n
}

fn channel_means(data: &[f64], c: usize) -> impl Iterator<Item = f64> + '_ {
    (0..c).map(move |ch| order_free_mean(data.iter().skip(ch).step_by(c).copied().collect()))
}

/// Per-layer means over all non-channel axes; weights first, then biases.
pub fn invariant_pool_np(feat: &WeightSpaceFeature) -> Vec<f64> {
    let c = feat.channels();
    let l = feat.num_layers();
    let mut out = Vec::with_capacity(2 * l * c);
    for i in 0..l {
        out.extend(channel_means(feat.weight(i), c));
    }
    for i in 0..l {
        out.extend(channel_means(feat.bias(i), c));
    }
    out
}

/// HNP-invariant pooling; see [`PoolKind::Hnp`].
pub fn invariant_pool_hnp(feat: &WeightSpaceFeature) -> Vec<f64> {
    let spec = feat.spec();
    let c = feat.channels();
    let l = spec.num_layers();
    let (n0, nl) = (spec.neurons(0), spec.neurons(l));
    let mut out = invariant_pool_np(feat);
    out.reserve((n0 + 2 * nl) * c);

    // Row mean of W_1 for every input column k (filter positions averaged too).
    let first = &spec.layers()[0];
    let s = first.filter_size();
    let w1 = feat.weight(0);
    for k in 0..n0 {
        for ch in 0..c {
            let vals = (0..first.n_out)
                .flat_map(|j| (0..s).map(move |f| ((j * n0 + k) * s + f) * c + ch))
                .map(|idx| w1[idx])
                .collect();
            out.push(order_free_mean(vals));
        }
    }

    // Column mean of W_L for every output row j.
    let last = &spec.layers()[l - 1];
    let per_row = last.n_in * last.filter_size();
    let wl = feat.weight(l - 1);
    for j in 0..nl {
        out.extend(channel_means(
            &wl[j * per_row * c..(j + 1) * per_row * c],
            c,
        ));
    }
    out.extend_from_slice(feat.bias(l - 1));
    out
}

pub fn invariant_pool(feat: &WeightSpaceFeature, kind: PoolKind) -> Vec<f64> {
    match kind {
        PoolKind::Np => invariant_pool_np(feat),
        PoolKind::Hnp => invariant_pool_hnp(feat),
    }
}

/// Adjoint of [`invariant_pool`]: spreads the pooled gradient back over the
/// entries each mean was taken over.
pub fn invariant_pool_backward(
    feat: &WeightSpaceFeature,
    kind: PoolKind,
    dpooled: &[f64],
) -> Result<WeightSpaceFeature> {
    let spec = feat.spec();
    let c = feat.channels();
    let l = spec.num_layers();
    let (n0, nl) = (spec.neurons(0), spec.neurons(l));
    ensure!(
        dpooled.len() == pooled_len(l, n0, nl, c, kind),
        "pooled gradient has wrong length"
    );
    let mut dx = WeightSpaceFeature::zeros_unchecked(spec, c);
    for i in 0..l {
        let g = &dpooled[i * c..(i + 1) * c];
        let w = dx.weight_mut(i);
        let n = (w.len() / c) as f64;
        for row in w.chunks_mut(c) {
            for (d, v) in row.iter_mut().zip(g) {
                *d += v / n;
            }
        }
        let g = &dpooled[(l + i) * c..(l + i + 1) * c];
        let b = dx.bias_mut(i);
        let n = (b.len() / c) as f64;
        for row in b.chunks_mut(c) {
            for (d, v) in row.iter_mut().zip(g) {
                *d += v / n;
            }
        }
    }
    if kind == PoolKind::Hnp {
        let mut off = 2 * l * c;
        let first = &spec.layers()[0];
        let s = first.filter_size();
        let denom = (first.n_out * s) as f64;
        {
            let w1 = dx.weight_mut(0);
            for j in 0..first.n_out {
                for k in 0..n0 {
                    for f in 0..s {
                        let base = ((j * n0 + k) * s + f) * c;
                        for ch in 0..c {
                            w1[base + ch] += dpooled[off + k * c + ch] / denom;
                        }
                    }
                }
            }
        }
        off += n0 * c;
        let last = &spec.layers()[l - 1];
        let per_row = last.n_in * last.filter_size();
        {
            let wl = dx.weight_mut(l - 1);
            for j in 0..nl {
                for row in wl[j * per_row * c..(j + 1) * per_row * c].chunks_mut(c) {
                    for (ch, d) in row.iter_mut().enumerate() {
                        *d += dpooled[off + j * c + ch] / per_row as f64;
                    }
                }
            }
        }
        off += nl * c;
        for (d, v) in dx.bias_mut(l - 1).iter_mut().zip(&dpooled[off..]) {
            *d += v;
        }
    }
    Ok(dx)
}
