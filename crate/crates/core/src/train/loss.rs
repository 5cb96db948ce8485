use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Mse,
    CrossEntropy,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(LossKind::Bce),
            "mse" => Ok(LossKind::Mse),
            "cross_entropy" => Ok(LossKind::CrossEntropy),
            _ => Err(Error::invalid(format!("unknown loss {s:?}"))),
        }
    }
}

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
}

/// Binary cross-entropy of a probability.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// BCE of `sigmoid(z)` and its derivative in `z` (zero where the clamp is active).
pub fn bce_with_logit(z: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(z);
    let loss = bce(p, y);
    let grad = if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
        0.0
    } else {
        p - y
    };
    (loss, grad)
}

/// Mean squared error over the entries and its gradient.
pub fn mse_with_grad(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect();
    (loss, grad)
}

/// Softmax cross-entropy of `logits` against class `label`, and its gradient.
pub fn cross_entropy_with_grad(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + m - logits[label];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(k, e)| e / sum - if k == label { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

/// Batch-mean loss. `bce` takes one probability per example; `mse` compares
/// equal-length vectors entrywise; `cross_entropy` takes `batch x k` logits
/// (row-major) and one class index per example.
pub fn loss_eval(kind: LossKind, preds: &[f64], targets: &[f64]) -> Result<f64> {
    ensure!(!targets.is_empty(), "empty batch");
    match kind {
        LossKind::Bce => {
            ensure!(
                preds.len() == targets.len(),
                "bce needs one prediction per target"
            );
            ensure!(
                targets.iter().all(|y| (0.0..=1.0).contains(y)),
                "bce targets must lie in [0, 1]"
            );
            Ok(preds
                .iter()
                .zip(targets)
                .map(|(p, y)| bce(*p, *y))
                .sum::<f64>()
                / targets.len() as f64)
        }
        LossKind::Mse => {
            ensure!(preds.len() == targets.len(), "mse shapes differ");
            Ok(mse_with_grad(preds, targets).0)
        }
        LossKind::CrossEntropy => {
            let b = targets.len();
            ensure!(
                preds.len().is_multiple_of(b) && preds.len() / b >= 1,
                "cross-entropy logits do not split into {b} rows"
            );
            let k = preds.len() / b;
            let mut total = 0.0;
            for (row, &y) in preds.chunks(k).zip(targets) {
                ensure!(
                    y >= 0.0 && y.fract() == 0.0 && (y as usize) < k,
                    "label {y} out of range"
                );
                total += cross_entropy_with_grad(row, y as usize).0;
            }
            Ok(total / b as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_values() {
        assert!((loss_eval(LossKind::Bce, &[0.5], &[1.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(
            loss_eval(LossKind::Mse, &[1.0, -2.0], &[1.0, -2.0]).unwrap(),
            0.0
        );
        let ce = loss_eval(LossKind::CrossEntropy, &[0.3; 5], &[2.0]).unwrap();
        assert!((ce - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn clamp_keeps_bce_finite() {
        assert!(bce(0.0, 1.0).is_finite());
        assert!((bce(0.0, 1.0) + BCE_CLAMP.ln()).abs() < 1e-12);
        let (l, g) = bce_with_logit(-800.0, 1.0);
        assert!(l.is_finite());
        assert_eq!(g, 0.0);
    }

    #[test]
    fn shape_errors() {
        assert!(loss_eval(LossKind::Mse, &[1.0], &[1.0, 2.0]).is_err());
        assert!(loss_eval(LossKind::Bce, &[0.5], &[2.0]).is_err());
        assert!(loss_eval(LossKind::CrossEntropy, &[0.0, 1.0, 2.0], &[0.0, 1.0]).is_err());
    }
}
