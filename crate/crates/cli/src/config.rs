use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nfkit::nflayers::Checkpoint;
use nfkit::siren::{Editor, EditorConfig};
use nfkit::train::{
    train_loop, Example, FlatMlp, FlatMlpConfig, LossKind, TrainConfig, Trainable, TrainingReport,
};
use nfkit::{Nfn, NfnConfig, TaskHead, WeightSpaceSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    InrClassify,
    PredictGen,
    Edit,
    Selftest,
}

impl Task {
    pub fn default_loss(self) -> LossKind {
        match self {
            Task::InrClassify | Task::PredictGen | Task::Selftest => LossKind::Bce,
            Task::Edit => LossKind::Mse,
        }
    }
}

/// Training run description. `model` is kept as JSON until the dataset is
/// known, so `spec` may be left out and filled in from the data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub model: Value,
    #[serde(default)]
    pub train: Map<String, Value>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        anyhow::Error::new(nfkit::Error::InvalidArgument(format!(
            "{what} {}: {e}",
            path.display()
        )))
    })
}

/// Config values first, then every `Some` override on top.
pub fn merge(base: &mut Map<String, Value>, overrides: &[(&str, Option<Value>)]) {
    for (k, v) in overrides {
        if let Some(v) = v {
            base.insert(k.to_string(), v.clone());
        }
    }
}

impl RunConfig {
    /// Training settings: defaults, then config file, then flags. The seed
    /// must come from the file or a flag.
    pub fn train_config(&self) -> Result<TrainConfig> {
        if !self.train.contains_key("seed") {
            bail!(nfkit::Error::InvalidArgument(
                "train.seed is mandatory (set it in the config or pass --seed)".into()
            ));
        }
        let mut base = match serde_json::to_value(TrainConfig {
            loss: self.task.default_loss(),
            ..TrainConfig::default()
        })? {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        base.extend(self.train.clone());
        serde_json::from_value(Value::Object(base))
            .map_err(|e| nfkit::Error::InvalidArgument(format!("train section: {e}")).into())
    }

    pub fn build_model(&self, spec: &WeightSpaceSpec) -> Result<AnyModel> {
        let Value::Object(mut m) = self.model.clone() else {
            bail!(nfkit::Error::InvalidArgument(
                "model must be a JSON object".into()
            ));
        };
        let kind = m
            .remove("kind")
            .and_then(|k| k.as_str().map(str::to_string))
            .unwrap_or_else(|| {
                if self.task == Task::Edit {
                    "editor"
                } else {
                    "nfn"
                }
                .to_string()
            });
        let spec_value = serde_json::to_value(spec)?;
        let default_head = match self.task {
            Task::Edit => serde_json::to_value(TaskHead::EquivariantOutput)?,
            _ => serde_json::to_value(TaskHead::ScalarSigmoid)?,
        };
        let invalid =
            |e: serde_json::Error| nfkit::Error::InvalidArgument(format!("model section: {e}"));
        Ok(match kind.as_str() {
            "nfn" => {
                m.entry("spec").or_insert(spec_value);
                m.entry("task_head").or_insert(default_head);
                let cfg: NfnConfig = serde_json::from_value(Value::Object(m)).map_err(invalid)?;
                AnyModel::Nfn(Nfn::new(cfg)?)
            }
            "flat_mlp" => {
                m.entry("spec").or_insert(spec_value);
                m.entry("task_head").or_insert(default_head);
                let cfg: FlatMlpConfig =
                    serde_json::from_value(Value::Object(m)).map_err(invalid)?;
                AnyModel::Flat(FlatMlp::new(cfg)?)
            }
            "editor" => {
                if let Some(Value::Object(n)) = m.get_mut("nfn") {
                    n.entry("spec").or_insert(spec_value);
                    n.entry("task_head").or_insert(default_head);
                }
                let cfg: EditorConfig =
                    serde_json::from_value(Value::Object(m)).map_err(invalid)?;
                AnyModel::Editor(Editor::new(cfg)?)
            }
            other => bail!(nfkit::Error::InvalidArgument(format!(
                "unknown model kind '{other}'"
            ))),
        })
    }
}

/// Any trainable model the CLI can save and restore.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum AnyModel {
    Nfn(Nfn),
    Flat(FlatMlp),
    Editor(Editor),
}

macro_rules! each_model {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Nfn($m) => $body,
            AnyModel::Flat($m) => $body,
            AnyModel::Editor($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        each_model!(self, m => m.to_checkpoint())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(match ckpt.model.as_str() {
            "nfn" => AnyModel::Nfn(Nfn::from_checkpoint(ckpt)?),
            "flat_mlp" => AnyModel::Flat(FlatMlp::from_checkpoint(ckpt)?),
            "editor" => AnyModel::Editor(Editor::from_checkpoint(ckpt)?),
            other => bail!(nfkit::Error::Format {
                kind: "NFN1 checkpoint",
                msg: format!("unknown model '{other}'"),
            }),
        })
    }

    /// Loss matching the model's output head.
    pub fn natural_loss(&self) -> LossKind {
        let head = match self {
            AnyModel::Nfn(m) => &m.config().task_head,
            AnyModel::Flat(m) => &m.config().task_head,
            AnyModel::Editor(_) => return LossKind::Mse,
        };
        match head {
            TaskHead::ScalarSigmoid => LossKind::Bce,
            TaskHead::ClassLogits { .. } => LossKind::CrossEntropy,
            _ => LossKind::Mse,
        }
    }

    pub fn train(
        &mut self,
        train: &[Example],
        test: Option<&[Example]>,
        cfg: &TrainConfig,
    ) -> nfkit::Result<TrainingReport> {
        each_model!(self, m => train_loop(m, train, test, cfg))
    }

    pub fn evaluate(
        &self,
        data: &[Example],
        loss: LossKind,
    ) -> nfkit::Result<nfkit::train::Metrics> {
        each_model!(self, m => nfkit::train::evaluate(m, data, loss))
    }

    pub fn num_params(&self) -> usize {
        each_model!(self, m => m.num_params())
    }
}
