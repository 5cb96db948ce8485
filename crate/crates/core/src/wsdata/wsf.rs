//! The `WSF1` container: magic bytes, a little-endian `u32` header length, a
//! UTF-8 JSON header, then the feature's canonical flattening as little-endian
//! `f64` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::feature::WeightSpaceFeature;
use super::spec::WeightSpaceSpec;
use crate::error::{Error, Result};

pub const WSF_MAGIC: &[u8; 4] = b"WSF1";

#[derive(Debug, Serialize, Deserialize)]
struct WsfHeader {
    spec: WeightSpaceSpec,
    channels: usize,
    dtype: String,
    byte_order: String,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format {
        kind: "WSF container",
        msg: msg.into(),
    }
}

/// Encodes a feature as a `WSF1` byte buffer.
pub fn encode_wsf(feat: &WeightSpaceFeature) -> Vec<u8> {
    let header = WsfHeader {
        spec: feat.spec().clone(),
        channels: feat.channels(),
        dtype: "f64".into(),
        byte_order: "little".into(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + feat.len() * 8);
    out.extend_from_slice(WSF_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for x in feat.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_wsf(bytes: &[u8]) -> Result<WeightSpaceFeature> {
    if bytes.len() < 8 || &bytes[..4] != WSF_MAGIC {
        return Err(format_err("missing WSF1 magic"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() < hlen {
        return Err(format_err("truncated header"));
    }
    let header: WsfHeader =
        serde_json::from_slice(&body[..hlen]).map_err(|e| format_err(format!("header: {e}")))?;
    if header.dtype != "f64" || header.byte_order != "little" {
        return Err(format_err(format!(
            "unsupported encoding {}/{}",
            header.dtype, header.byte_order
        )));
    }
    let payload = &body[hlen..];
    let expected = header.spec.dim() * header.channels * 8;
    if payload.len() != expected {
        return Err(format_err(format!(
            "payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format_err("payload holds non-finite values"));
    }
    WeightSpaceFeature::unflatten(&header.spec, header.channels, &values)
}

pub fn write_wsf(path: impl AsRef<Path>, feat: &WeightSpaceFeature) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wsf(feat)).map_err(|e| Error::io(path, e))
}

pub fn read_wsf(path: impl AsRef<Path>) -> Result<WeightSpaceFeature> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wsf(&bytes)
}
