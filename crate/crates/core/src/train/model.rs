use super::data::{Example, Target};
use super::loss::{bce_with_logit, cross_entropy_with_grad, mse_with_grad, LossKind};
use crate::error::{ensure, Error, Result};
use crate::nflayers::{Nfn, NfnOutput, TaskHead};
use crate::wsdata::WeightSpaceFeature;

/// A model the training loop can optimize.
pub trait Trainable: Clone + Send + Sync {
    /// Parameter blocks in a fixed declaration order.
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    /// Raw output vector (logits, regression values, or a flattened feature).
    fn predict(&self, x: &WeightSpaceFeature) -> Result<Vec<f64>>;
    /// Checks that `loss` makes sense for this model's output.
    fn check_loss(&self, loss: LossKind) -> Result<()>;
    /// Loss of one example; adds its parameter gradient into `grads`.
    fn loss_grad(&self, ex: &Example, loss: LossKind, grads: &mut [Vec<f64>]) -> Result<f64>;

    /// Loss of one example without gradients.
    fn loss(&self, ex: &Example, loss: LossKind) -> Result<f64> {
        Ok(output_loss(loss, &self.predict(&ex.input)?, &ex.target)?.0)
    }

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Loss of a raw output vector and its gradient with respect to that vector.
/// `bce` reads the single output as a logit.
pub fn output_loss(kind: LossKind, out: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
    match (kind, target) {
        (LossKind::Bce, Target::Label(_) | Target::Scalar(_)) => {
            ensure!(
                out.len() == 1,
                "bce needs a single logit, got {} outputs",
                out.len()
            );
            let y = match target {
                Target::Label(l) => {
                    ensure!(*l <= 1, "bce labels must be 0 or 1, got {l}");
                    *l as f64
                }
                Target::Scalar(s) => *s,
                Target::Values(_) => unreachable!(),
            };
            ensure!((0.0..=1.0).contains(&y), "bce targets must lie in [0, 1]");
            let (l, g) = bce_with_logit(out[0], y);
            Ok((l, vec![g]))
        }
        (LossKind::CrossEntropy, Target::Label(l)) => {
            ensure!(
                *l < out.len(),
                "label {l} out of range for {} logits",
                out.len()
            );
            Ok(cross_entropy_with_grad(out, *l))
        }
        (LossKind::Mse, Target::Values(v)) => {
            ensure!(
                v.len() == out.len(),
                "mse target has {} values, output {}",
                v.len(),
                out.len()
            );
            Ok(mse_with_grad(out, v))
        }
        (LossKind::Mse, Target::Scalar(s)) => {
            ensure!(out.len() == 1, "scalar mse needs one output");
            Ok(mse_with_grad(out, &[*s]))
        }
        _ => Err(Error::invalid(format!(
            "loss {kind:?} does not accept target {target:?}"
        ))),
    }
}

fn output_vector(out: NfnOutput) -> Vec<f64> {
    match out {
        NfnOutput::Vector(v) => v,
        NfnOutput::Feature(f) => f.flatten(),
    }
}

impl Trainable for Nfn {
    fn params(&self) -> Vec<&[f64]> {
        Nfn::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        Nfn::params_mut(self)
    }

    fn predict(&self, x: &WeightSpaceFeature) -> Result<Vec<f64>> {
        Ok(output_vector(self.forward(x)?))
    }

    fn check_loss(&self, loss: LossKind) -> Result<()> {
        let head = &self.config().task_head;
        let ok = match loss {
            LossKind::Bce => *head == TaskHead::ScalarSigmoid,
            LossKind::CrossEntropy => matches!(head, TaskHead::ClassLogits { .. }),
            LossKind::Mse => true,
        };
        ensure!(ok, "loss {loss:?} is incompatible with task head {head:?}");
        Ok(())
    }

    fn loss_grad(&self, ex: &Example, loss: LossKind, grads: &mut [Vec<f64>]) -> Result<f64> {
        let cache = self.forward_cached(&ex.input)?;
        let (l, dout) = match cache.output() {
            NfnOutput::Vector(v) => {
                let (l, g) = output_loss(loss, v, &ex.target)?;
                (l, NfnOutput::Vector(g))
            }
            NfnOutput::Feature(f) => {
                let (l, g) = output_loss(loss, &f.flatten(), &ex.target)?;
                (
                    l,
                    NfnOutput::Feature(WeightSpaceFeature::unflatten(f.spec(), f.channels(), &g)?),
                )
            }
        };
        self.backward(&cache, &dout, grads)?;
        Ok(l)
    }
}
