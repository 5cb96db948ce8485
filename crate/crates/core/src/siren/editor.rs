use serde::{Deserialize, Serialize};

use super::image::coordinate_grid;
use super::net::{siren_eval, siren_mse_grad, SirenSpec};
use crate::error::{ensure, Error, Result};
use crate::nflayers::{Checkpoint, Nfn, NfnConfig, NfnOutput, TaskHead};
use crate::train::{Example, LossKind, Target, Trainable};
use crate::wsdata::WeightSpaceFeature;

/// `U' = U + gamma * nfn(U)` for an equivariant-output `nfn`.
pub fn edit_apply(u: &WeightSpaceFeature, nfn: &Nfn, gamma: f64) -> Result<WeightSpaceFeature> {
    let delta = match nfn.forward(u)? {
        NfnOutput::Feature(f) => f,
        NfnOutput::Vector(_) => {
            return Err(Error::invalid(
                "editing needs an equivariant-output network",
            ))
        }
    };
    ensure!(
        delta.channels() == u.channels(),
        "editor outputs {} channels, weights have {}",
        delta.channels(),
        u.channels()
    );
    // Zero updates are skipped so that a null edit is bit-exact, signed zeros included.
    let mut out = u.clone();
    for (o, d) in out.iter_mut().zip(delta.iter()) {
        let s = gamma * d;
        if s != 0.0 {
            *o += s;
        }
    }
    Ok(out)
}

fn default_gamma() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditorConfig {
    pub nfn: NfnConfig,
    pub siren: SirenSpec,
    /// Side length of the rendered square image the loss compares against.
    pub resolution: usize,
    #[serde(default = "default_gamma")]
    pub gamma_init: f64,
}

/// Trainable weight-space editor: the loss renders the edited SIREN and
/// compares it with the target image.
#[derive(Clone, Debug)]
pub struct Editor {
    config: EditorConfig,
    nfn: Nfn,
    gamma: Vec<f64>,
    coords: Vec<[f64; 2]>,
}

impl Editor {
    pub fn new(config: EditorConfig) -> Result<Self> {
        config.siren.validate()?;
        ensure!(config.resolution > 0, "resolution must be positive");
        ensure!(
            config.nfn.task_head == TaskHead::EquivariantOutput,
            "the editor network must have an equivariant output"
        );
        ensure!(
            config.nfn.in_channels == 1 && config.nfn.channels.last() == Some(&1),
            "the editor network maps one channel to one channel"
        );
        ensure!(
            config.nfn.spec.same_dims(&config.siren.weight_space()),
            "editor network and SIREN weight spaces differ"
        );
        let nfn = Nfn::new(config.nfn.clone())?;
        Ok(Editor {
            gamma: vec![config.gamma_init],
            coords: coordinate_grid(config.resolution, config.resolution),
            config,
            nfn,
        })
    }

    pub fn config(&self) -> &EditorConfig {
        &self.config
    }

    pub fn nfn(&self) -> &Nfn {
        &self.nfn
    }

    pub fn nfn_mut(&mut self) -> &mut Nfn {
        &mut self.nfn
    }

    pub fn gamma(&self) -> f64 {
        self.gamma[0]
    }

    pub fn set_gamma(&mut self, g: f64) {
        self.gamma[0] = g;
    }

    pub fn edit(&self, u: &WeightSpaceFeature) -> Result<WeightSpaceFeature> {
        edit_apply(u, &self.nfn, self.gamma[0])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let cfg = serde_json::to_value(&self.config).expect("config serializes");
        Checkpoint::new("editor", cfg, self.params())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ensure!(
            ckpt.model == "editor",
            "checkpoint holds a {:?} model",
            ckpt.model
        );
        let cfg: EditorConfig =
            serde_json::from_value(ckpt.config.clone()).map_err(|e| Error::Format {
                kind: "NFN1 checkpoint",
                msg: e.to_string(),
            })?;
        let mut e = Editor::new(cfg)?;
        ckpt.restore_into(e.params_mut())?;
        Ok(e)
    }
}

impl Trainable for Editor {
    /// Network blocks, then `[gamma]`.
    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.nfn.params();
        p.push(&self.gamma);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.nfn.params_mut();
        p.push(&mut self.gamma);
        p
    }

    /// Rendered pixels of the edited SIREN.
    fn predict(&self, x: &WeightSpaceFeature) -> Result<Vec<f64>> {
        siren_eval(&self.edit(x)?, &self.coords, self.config.siren.omega0)
    }

    fn check_loss(&self, loss: LossKind) -> Result<()> {
        ensure!(loss == LossKind::Mse, "the editor trains on pixel MSE");
        Ok(())
    }

    fn loss_grad(&self, ex: &Example, loss: LossKind, grads: &mut [Vec<f64>]) -> Result<f64> {
        self.check_loss(loss)?;
        let Target::Values(target) = &ex.target else {
            return Err(Error::invalid("editor examples need a target image"));
        };
        let cache = self.nfn.forward_cached(&ex.input)?;
        let NfnOutput::Feature(delta) = cache.output() else {
            unreachable!("validated equivariant head")
        };
        let gamma = self.gamma[0];
        let mut edited = ex.input.clone();
        edited.axpy(gamma, delta)?;
        ensure!(
            target.len() == self.coords.len(),
            "target image has the wrong size"
        );
        let (l, du) = siren_mse_grad(&edited, &self.coords, self.config.siren.omega0, target)?;
        let n = grads.len();
        grads[n - 1][0] += du.dot(delta);
        let dnet = du.scale(gamma);
        self.nfn
            .backward(&cache, &NfnOutput::Feature(dnet), &mut grads[..n - 1])?;
        Ok(l)
    }
}
