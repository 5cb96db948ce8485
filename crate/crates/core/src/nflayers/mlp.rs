use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};

/// Dense ReLU network; no activation after the last layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    /// Row-major `out x in` matrices.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Pre-activations of every layer plus the input, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map_or(&self.input, Vec::as_slice)
    }
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` initialization for weights and biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        ensure!(sizes.len() >= 2, "an MLP needs input and output sizes");
        ensure!(
            sizes.iter().all(|&s| s > 0),
            "MLP layer sizes must be positive"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            weights.push(
                (0..w[0] * w[1])
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect(),
            );
            biases.push((0..w[1]).map(|_| rng.gen_range(-bound..=bound)).collect());
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        let mut m = Self::init(sizes, 0)?;
        m.weights
            .iter_mut()
            .chain(m.biases.iter_mut())
            .flatten()
            .for_each(|x| *x = 0.0);
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// `[W_0, b_0, W_1, b_1, ...]`.
    pub fn params(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn num_blocks(&self) -> usize {
        2 * self.weights.len()
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<MlpCache> {
        ensure!(
            x.len() == self.input_dim(),
            "MLP input has length {}, expected {}",
            x.len(),
            self.input_dim()
        );
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut h: Vec<f64> = x.to_vec();
        for (li, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let n_in = self.sizes[li];
            let z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bo)| {
                    bo + w[o * n_in..(o + 1) * n_in]
                        .iter()
                        .zip(&h)
                        .map(|(a, v)| a * v)
                        .sum::<f64>()
                })
                .collect();
            h = z.iter().map(|v| v.max(0.0)).collect();
            pre.push(z);
        }
        Ok(MlpCache {
            input: x.to_vec(),
            pre,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.output().to_vec())
    }

    /// Accumulates `[dW_0, db_0, ...]` into `grads`; returns the input gradient.
    pub fn backward(
        &self,
        cache: &MlpCache,
        dout: &[f64],
        grads: &mut [Vec<f64>],
    ) -> Result<Vec<f64>> {
        ensure!(
            dout.len() == self.output_dim(),
            "MLP output gradient length mismatch"
        );
        ensure!(
            grads.len() == self.num_blocks(),
            "MLP gradient buffer mismatch"
        );
        let n = self.weights.len();
        let mut delta = dout.to_vec();
        for li in (0..n).rev() {
            let n_in = self.sizes[li];
            let input: Vec<f64> = if li == 0 {
                cache.input.clone()
            } else {
                cache.pre[li - 1].iter().map(|v| v.max(0.0)).collect()
            };
            let (gw, rest) = grads[2 * li..].split_at_mut(1);
            let gw = &mut gw[0];
            let gb = &mut rest[0];
            for (o, d) in delta.iter().enumerate() {
                gb[o] += d;
                for (g, v) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(&input) {
                    *g += d * v;
                }
            }
            let w = &self.weights[li];
            let mut din = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                for (di, a) in din.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *di += d * a;
                }
            }
            if li > 0 {
                // ReLU subgradient is 0 at exactly 0.
                for (di, z) in din.iter_mut().zip(&cache.pre[li - 1]) {
                    if *z <= 0.0 {
                        *di = 0.0;
                    }
                }
            }
            delta = din;
        }
        Ok(delta)
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }
}
