use serde::{Deserialize, Serialize};

use super::data::Example;
use super::loss::LossKind;
use super::model::Trainable;
use super::trainer::{batch_loss, forward_backward};
use crate::error::{ensure, Result};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(block, entry)` of the worst parameter.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
        }
    }

    fn record(&mut self, block: usize, entry: usize, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = e;
            self.worst = Some((block, entry));
            self.analytic = analytic;
            self.numeric = numeric;
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// `|a - n| / max(1, |a|, |n|)`: relative for gradients of magnitude at
/// least 1, absolute below that.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares `analytic` against central differences of `f` at `x`.
pub fn check_function_gradient(
    x: &[f64],
    f: impl Fn(&[f64]) -> Result<f64>,
    analytic: &[f64],
    h: f64,
) -> Result<GradCheckReport> {
    ensure!(x.len() == analytic.len(), "gradient length mismatch");
    let mut report = GradCheckReport::empty();
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = f(&xp)?;
        xp[i] = x[i] - h;
        let down = f(&xp)?;
        xp[i] = x[i];
        report.record(0, i, analytic[i], (up - down) / (2.0 * h));
    }
    Ok(report)
}

/// Checks every parameter gradient of `model` on the batch-mean loss.
pub fn check_model_gradients<M: Trainable>(
    model: &M,
    batch: &[Example],
    loss: LossKind,
    h: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = forward_backward(model, batch, loss)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport::empty();
    for (b, g) in grads.iter().enumerate() {
        for (e, &a) in g.iter().enumerate() {
            let orig = probe.params()[b][e];
            probe.params_mut()[b][e] = orig + h;
            let up = batch_loss(&probe, batch, loss)?;
            probe.params_mut()[b][e] = orig - h;
            let down = batch_loss(&probe, batch, loss)?;
            probe.params_mut()[b][e] = orig;
            report.record(b, e, a, (up - down) / (2.0 * h));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let x = [1.0, -2.0, 0.5];
        let r = check_function_gradient(
            &x,
            |v| Ok(v.iter().map(|a| a * a).sum()),
            &[2.0, -4.0, 1.0],
            FD_STEP,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-9);
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let r = check_function_gradient(&[1.0], |v| Ok(v[0] * v[0]), &[-2.0], FD_STEP).unwrap();
        assert!(r.max_rel_error > 1.0);
    }
}
