use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Moments shaped like `params`, with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(params: &[&[f64]], lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: Vec<&mut [f64]>, grads: &[Vec<f64>], state: &mut AdamState) -> Result<()> {
    ensure!(
        params.len() == grads.len() && params.len() == state.m.len(),
        "Adam: {} parameter blocks, {} gradients, {} moments",
        params.len(),
        grads.len(),
        state.m.len()
    );
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        ensure!(
            p.len() == g.len() && p.len() == m.len(),
            "Adam: block length mismatch"
        );
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .into_iter()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(&[&p], 0.1);
        adam_step(vec![&mut p], &[vec![0.0, 0.0]], &mut st).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_matches_hand_formula() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(&[&p], 1e-3);
        adam_step(vec![&mut p], &[vec![0.5]], &mut st).unwrap();
        // mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps).
        let expected = -1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = vec![0.0; 2];
        let mut st = AdamState::new(&[&p], 1e-3);
        assert!(adam_step(vec![&mut p], &[vec![0.0]], &mut st).is_err());
    }
}
