use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{coordinate_grid, psnr, Image};
use crate::error::{ensure, Error, Result};
use crate::train::{adam_step, AdamState};
use crate::wsdata::{WeightSpaceFeature, WeightSpaceSpec};

/// Layer widths of a sinusoidal network `R^2 -> R^out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirenSpec {
    pub hidden: Vec<usize>,
    #[serde(default = "default_out")]
    pub out_dim: usize,
    #[serde(default = "default_omega")]
    pub omega0: f64,
}

fn default_out() -> usize {
    1
}

fn default_omega() -> f64 {
    30.0
}

impl Default for SirenSpec {
    fn default() -> Self {
        SirenSpec {
            hidden: vec![32, 32],
            out_dim: 1,
            omega0: 30.0,
        }
    }
}

impl SirenSpec {
    pub const IN_DIM: usize = 2;

    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.hidden.is_empty(),
            "a SIREN needs at least one hidden layer"
        );
        ensure!(
            self.hidden.iter().all(|&w| w > 0),
            "SIREN widths must be positive"
        );
        ensure!(
            self.out_dim == 1 || self.out_dim == 3,
            "SIREN output must have 1 or 3 channels"
        );
        ensure!(
            self.omega0.is_finite() && self.omega0 > 0.0,
            "omega0 must be positive"
        );
        Ok(())
    }

    pub fn weight_space(&self) -> WeightSpaceSpec {
        let mut n = vec![Self::IN_DIM];
        n.extend(&self.hidden);
        n.push(self.out_dim);
        WeightSpaceSpec::mlp(&n).expect("positive widths")
    }

    /// Standard SIREN initialization: first layer `U(+-1/fan_in)`, later layers
    /// `U(+-sqrt(6/fan_in)/omega0)`, biases `U(+-1/sqrt(fan_in))`.
    pub fn init(&self, seed: u64) -> WeightSpaceFeature {
        let spec = self.weight_space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = WeightSpaceFeature::zeros(&spec, 1).expect("valid spec");
        for i in 0..spec.num_layers() {
            let fan_in = spec.layers()[i].n_in as f64;
            let bound = if i == 0 {
                1.0 / fan_in
            } else {
                (6.0 / fan_in).sqrt() / self.omega0
            };
            for w in u.weight_mut(i) {
                *w = rng.gen_range(-bound..=bound);
            }
            let bb = 1.0 / fan_in.sqrt();
            for b in u.bias_mut(i) {
                *b = rng.gen_range(-bb..=bb);
            }
        }
        u
    }
}

fn check_weights(u: &WeightSpaceFeature) -> Result<()> {
    let spec = u.spec();
    ensure!(u.channels() == 1, "SIREN weights have one channel");
    ensure!(!spec.has_conv(), "SIREN weights are fully connected");
    ensure!(spec.num_layers() >= 2, "a SIREN needs a hidden layer");
    ensure!(
        spec.neurons(0) == SirenSpec::IN_DIM,
        "SIREN input dimension must be 2, got {}",
        spec.neurons(0)
    );
    Ok(())
}

type OutputGrad<'a> = &'a mut dyn FnMut(usize, &[f64], &mut [f64]);

/// Forward pass over `coords`, plus a backward pass when `dout` is given.
/// `dout(c, out, d)` receives the outputs at coordinate `c` and writes their
/// gradient into `d`, so losses can be formed without a second forward pass.
fn run(
    u: &WeightSpaceFeature,
    coords: &[[f64; 2]],
    omega0: f64,
    mut dout: Option<OutputGrad<'_>>,
) -> Result<(Vec<f64>, Option<WeightSpaceFeature>)> {
    check_weights(u)?;
    let spec = u.spec();
    let l = spec.num_layers();
    let layers = spec.layers();
    let out_dim = spec.neurons(l);
    let mut values = Vec::with_capacity(coords.len() * out_dim);
    let mut grad = dout
        .as_ref()
        .map(|_| WeightSpaceFeature::zeros(spec, 1).expect("valid spec"));
    // acts[i] = input of layer i; slopes[i] = d act[i+1] / d z for hidden layer i.
    let mut acts: Vec<Vec<f64>> = (0..l).map(|i| vec![0.0; layers[i].n_in]).collect();
    let mut slopes: Vec<Vec<f64>> = (0..l - 1).map(|i| vec![0.0; layers[i].n_out]).collect();
    let mut out = vec![0.0; out_dim];
    let mut delta = Vec::new();
    let mut prev = Vec::new();
    for (c, coord) in coords.iter().enumerate() {
        acts[0].copy_from_slice(coord);
        for i in 0..l {
            let n_in = layers[i].n_in;
            let (w, b) = (u.weight(i), u.bias(i));
            let (head, tail) = acts.split_at_mut(i + 1);
            let x = &head[i];
            for j in 0..layers[i].n_out {
                let z = b[j]
                    + w[j * n_in..(j + 1) * n_in]
                        .iter()
                        .zip(x)
                        .map(|(a, v)| a * v)
                        .sum::<f64>();
                if i + 1 < l {
                    let (s, co) = (omega0 * z).sin_cos();
                    tail[0][j] = s;
                    slopes[i][j] = omega0 * co;
                } else {
                    out[j] = z;
                }
            }
        }
        values.extend_from_slice(&out);
        let (Some(g), Some(f)) = (grad.as_mut(), dout.as_mut()) else {
            continue;
        };
        delta.clear();
        delta.resize(out_dim, 0.0);
        f(c, &out, &mut delta);
        for i in (0..l).rev() {
            let n_in = layers[i].n_in;
            if i + 1 < l {
                for (dj, s) in delta.iter_mut().zip(&slopes[i]) {
                    *dj *= s;
                }
            }
            let gw = g.weight_mut(i);
            for (j, dj) in delta.iter().enumerate() {
                for (gk, x) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(&acts[i]) {
                    *gk += dj * x;
                }
            }
            for (gb, dj) in g.bias_mut(i).iter_mut().zip(&delta) {
                *gb += dj;
            }
            if i > 0 {
                let w = u.weight(i);
                prev.clear();
                prev.resize(n_in, 0.0);
                for (j, dj) in delta.iter().enumerate() {
                    for (p, a) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *p += dj * a;
                    }
                }
                std::mem::swap(&mut delta, &mut prev);
            }
        }
    }
    Ok((values, grad))
}

/// `h_0 = x; h_i = sin(omega0 (W_i h_{i-1} + b_i))`; the last layer is affine.
pub fn siren_eval(u: &WeightSpaceFeature, coords: &[[f64; 2]], omega0: f64) -> Result<Vec<f64>> {
    Ok(run(u, coords, omega0, None)?.0)
}

/// Outputs and the gradient of `sum(dout * output)` with respect to the weights.
pub fn siren_eval_backward(
    u: &WeightSpaceFeature,
    coords: &[[f64; 2]],
    omega0: f64,
    dout: &[f64],
) -> Result<(Vec<f64>, WeightSpaceFeature)> {
    let out_dim = u.spec().neurons(u.num_layers());
    ensure!(
        dout.len() == coords.len() * out_dim,
        "SIREN output gradient has the wrong length"
    );
    let mut f = |c: usize, _: &[f64], d: &mut [f64]| {
        d.copy_from_slice(&dout[c * out_dim..(c + 1) * out_dim])
    };
    let (v, g) = run(u, coords, omega0, Some(&mut f))?;
    Ok((v, g.expect("gradient requested")))
}

/// Pixel MSE against `target` and its weight gradient, in one pass.
pub(crate) fn siren_mse_grad(
    u: &WeightSpaceFeature,
    coords: &[[f64; 2]],
    omega0: f64,
    target: &[f64],
) -> Result<(f64, WeightSpaceFeature)> {
    let out_dim = u.spec().neurons(u.num_layers());
    ensure!(
        target.len() == coords.len() * out_dim,
        "target has the wrong length"
    );
    let n = target.len() as f64;
    let mut sse = 0.0;
    let mut f = |c: usize, out: &[f64], d: &mut [f64]| {
        for ((dj, o), t) in d.iter_mut().zip(out).zip(&target[c * out_dim..]) {
            sse += (o - t) * (o - t);
            *dj = 2.0 * (o - t) / n;
        }
    };
    let (_, g) = run(u, coords, omega0, Some(&mut f))?;
    Ok((sse / n, g.expect("gradient requested")))
}

/// Evaluates the SIREN on the pixel-center grid of an `height x width` image.
pub fn render(u: &WeightSpaceFeature, height: usize, width: usize, omega0: f64) -> Result<Image> {
    check_weights(u)?;
    ensure!(
        u.spec().neurons(u.num_layers()) == 1,
        "rendering needs a single-channel SIREN"
    );
    let pixels = siren_eval(u, &coordinate_grid(height, width), omega0)?;
    Image::new(height, width, pixels)
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub weights: WeightSpaceFeature,
    pub psnr: f64,
    /// `(step, psnr)` at step 0, every [`PSNR_EVERY`] steps, and at the end.
    pub history: Vec<(usize, f64)>,
}

pub const PSNR_EVERY: usize = 500;

/// Fits a single-output SIREN to `image` with full-batch Adam on the pixel MSE.
pub fn fit_siren(
    image: &Image,
    spec: &SirenSpec,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<FitResult> {
    spec.validate()?;
    ensure!(spec.out_dim == 1, "image fitting uses single-output SIRENs");
    ensure!(
        image.pixels.iter().all(|p| p.is_finite()),
        "image contains non-finite values"
    );
    let coords = coordinate_grid(image.height, image.width);
    let mut u = spec.init(seed);
    let mut adam = AdamState::new(&u.blocks(), lr);
    let n = image.pixels.len() as f64;
    let mut history = Vec::new();
    let mut last_psnr = 0.0;
    for step in 0..=steps {
        if step == steps {
            let out = siren_eval(&u, &coords, spec.omega0)?;
            let mse = out
                .iter()
                .zip(&image.pixels)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / n;
            last_psnr = psnr(mse);
            history.push((step, last_psnr));
            break;
        }
        let (mse, g) = siren_mse_grad(&u, &coords, spec.omega0, &image.pixels)?;
        last_psnr = psnr(mse);
        if step % PSNR_EVERY == 0 {
            history.push((step, last_psnr));
        }
        let grads: Vec<Vec<f64>> = g.blocks().iter().map(|b| b.to_vec()).collect();
        adam_step(u.blocks_mut(), &grads, &mut adam)?;
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("SIREN fit diverged at step {step}")));
        }
    }
    Ok(FitResult {
        weights: u,
        psnr: last_psnr,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero() {
        let spec = SirenSpec::default();
        let u = WeightSpaceFeature::zeros(&spec.weight_space(), 1).unwrap();
        let v = siren_eval(&u, &[[0.3, -0.2], [1.0, 1.0]], 30.0).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn single_unit_is_sine_of_x() {
        let u = WeightSpaceFeature::from_matrices(
            &[vec![vec![1.0, 0.0]], vec![vec![1.0]]],
            &[vec![0.0], vec![0.0]],
        )
        .unwrap();
        for x in [-1.0, -0.3, 0.0, 0.7] {
            let v = siren_eval(&u, &[[x, 0.4]], 1.0).unwrap();
            assert!((v[0] - f64::sin(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let s = SirenSpec::default();
        assert_eq!(s.init(3), s.init(3));
        assert_ne!(s.init(3), s.init(4));
    }

    #[test]
    fn rejects_wrong_input_dim() {
        let u = WeightSpaceFeature::zeros(&WeightSpaceSpec::mlp(&[3, 4, 1]).unwrap(), 1).unwrap();
        assert!(siren_eval(&u, &[[0.0, 0.0]], 30.0).is_err());
    }
}
