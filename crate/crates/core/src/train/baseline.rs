use serde::{Deserialize, Serialize};

use super::data::Example;
use super::loss::LossKind;
use super::model::{output_loss, Trainable};
use crate::error::{ensure, Error, Result};
use crate::nflayers::{Checkpoint, Mlp, TaskHead};
use crate::wsdata::{WeightSpaceFeature, WeightSpaceSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatMlpConfig {
    pub spec: WeightSpaceSpec,
    #[serde(default = "one")]
    pub in_channels: usize,
    pub hidden: Vec<usize>,
    pub task_head: TaskHead,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

/// Baseline that flattens the weights and feeds them to an ordinary MLP.
#[derive(Clone, Debug)]
pub struct FlatMlp {
    config: FlatMlpConfig,
    mlp: Mlp,
}

impl FlatMlp {
    pub fn new(config: FlatMlpConfig) -> Result<Self> {
        let out = match config.task_head {
            TaskHead::ScalarSigmoid => 1,
            TaskHead::ClassLogits { classes } => classes,
            _ => {
                return Err(Error::invalid(
                    "flat MLP baselines need a scalar or class head",
                ))
            }
        };
        let mut sizes = vec![config.spec.dim() * config.in_channels];
        sizes.extend(&config.hidden);
        sizes.push(out);
        let mlp = Mlp::init(&sizes, config.seed)?;
        Ok(FlatMlp { config, mlp })
    }

    pub fn config(&self) -> &FlatMlpConfig {
        &self.config
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let cfg = serde_json::to_value(&self.config).expect("config serializes");
        Checkpoint::new("flat_mlp", cfg, self.mlp.params())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ensure!(
            ckpt.model == "flat_mlp",
            "checkpoint holds a {:?} model",
            ckpt.model
        );
        let cfg: FlatMlpConfig =
            serde_json::from_value(ckpt.config.clone()).map_err(|e| Error::Format {
                kind: "NFN1 checkpoint",
                msg: e.to_string(),
            })?;
        let mut m = FlatMlp::new(cfg)?;
        ckpt.restore_into(m.mlp.params_mut())?;
        Ok(m)
    }
}

/// Width `h` of a two-hidden-layer MLP `[d, h, h, out]` whose parameter
/// count is closest to `target`.
pub fn param_matched_width(input_dim: usize, out_dim: usize, target: usize) -> usize {
    let count = |h: usize| input_dim * h + h + h * h + h + h * out_dim + out_dim;
    let mut best = 1;
    let mut h = 1;
    while count(h) <= target.saturating_mul(2) && h < 1 << 16 {
        if count(h).abs_diff(target) < count(best).abs_diff(target) {
            best = h;
        }
        h += 1;
    }
    best
}

impl Trainable for FlatMlp {
    fn params(&self) -> Vec<&[f64]> {
        self.mlp.params()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.mlp.params_mut()
    }

    fn predict(&self, x: &WeightSpaceFeature) -> Result<Vec<f64>> {
        ensure!(
            x.spec().same_dims(&self.config.spec) && x.channels() == self.config.in_channels,
            "input does not match the baseline's weight space"
        );
        self.mlp.forward(&x.flatten())
    }

    fn check_loss(&self, loss: LossKind) -> Result<()> {
        let ok = match loss {
            LossKind::Bce => self.config.task_head == TaskHead::ScalarSigmoid,
            LossKind::CrossEntropy => matches!(self.config.task_head, TaskHead::ClassLogits { .. }),
            LossKind::Mse => true,
        };
        ensure!(ok, "loss {loss:?} is incompatible with the baseline head");
        Ok(())
    }

    fn loss_grad(&self, ex: &Example, loss: LossKind, grads: &mut [Vec<f64>]) -> Result<f64> {
        ensure!(
            ex.input.spec().same_dims(&self.config.spec),
            "input does not match the baseline's weight space"
        );
        let cache = self.mlp.forward_cached(&ex.input.flatten())?;
        let (l, g) = output_loss(loss, cache.output(), &ex.target)?;
        self.mlp.backward(&cache, &g, grads)?;
        Ok(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_matches_budget() {
        let h = param_matched_width(100, 1, 10_000);
        let count = 100 * h + h + h * h + h + h + 1;
        let next = 100 * (h + 1) + 2 * (h + 1) + (h + 1) * (h + 1) + (h + 1) + 1;
        assert!(count.abs_diff(10_000) <= next.abs_diff(10_000));
    }
}
