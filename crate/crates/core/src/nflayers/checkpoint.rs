//! The `NFN1` checkpoint: magic bytes, a little-endian `u32` header length, a
//! JSON header `{model, config, block_lens}`, then every parameter block in
//! declaration order as little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::model::{Nfn, NfnConfig};
use crate::error::{ensure, Error, Result};

pub const NFN_MAGIC: &[u8; 4] = b"NFN1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Model kind, e.g. `"nfn"`, `"editor"`, `"flat_mlp"`.
    pub model: String,
    pub config: Value,
    pub blocks: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: String,
    config: Value,
    block_lens: Vec<usize>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format {
        kind: "NFN1 checkpoint",
        msg: msg.into(),
    }
}

impl Checkpoint {
    pub fn new(model: &str, config: Value, blocks: Vec<&[f64]>) -> Self {
        Checkpoint {
            model: model.to_string(),
            config,
            blocks: blocks.into_iter().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.clone(),
            config: self.config.clone(),
            block_lens: self.blocks.iter().map(Vec::len).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let total: usize = self.blocks.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(8 + json.len() + 8 * total);
        out.extend_from_slice(NFN_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for x in self.blocks.iter().flatten() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != NFN_MAGIC {
            return Err(format_err("missing NFN1 magic"));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() < hlen {
            return Err(format_err("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| format_err(format!("header: {e}")))?;
        let payload = &body[hlen..];
        let total: usize = header.block_lens.iter().sum();
        if payload.len() != total * 8 {
            return Err(format_err(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                total * 8
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        let blocks = header
            .block_lens
            .iter()
            .map(|&n| values.by_ref().take(n).collect())
            .collect();
        Ok(Checkpoint {
            model: header.model,
            config: header.config,
            blocks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Copies the stored blocks into `dst`, checking that every length matches.
    pub fn restore_into(&self, dst: Vec<&mut [f64]>) -> Result<()> {
        ensure!(
            dst.len() == self.blocks.len(),
            "checkpoint has {} parameter blocks, model has {}",
            self.blocks.len(),
            dst.len()
        );
        for (d, s) in dst.into_iter().zip(&self.blocks) {
            ensure!(d.len() == s.len(), "parameter block length mismatch");
            d.copy_from_slice(s);
        }
        Ok(())
    }
}

impl Nfn {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let config = serde_json::to_value(self.config()).expect("config serializes");
        Checkpoint::new("nfn", config, self.params())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ensure!(
            ckpt.model == "nfn",
            "checkpoint holds a {:?} model, not an nfn",
            ckpt.model
        );
        let config: NfnConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| format_err(format!("config: {e}")))?;
        let mut model = Nfn::new(config)?;
        ckpt.restore_into(model.params_mut())?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
