use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SharingScheme;
use crate::error::{ensure, Error, Result};
use crate::wsdata::{GroupTag, WeightSpaceSpec};

/// On-disk form of a [`SharingScheme`]. `orbits` run-length encodes the
/// orbit labels in canonical pair order as `[label, run_length]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeFile {
    pub spec: WeightSpaceSpec,
    pub group: String,
    pub orbit_count: usize,
    pub orbits: Vec<[u64; 2]>,
}

impl From<&SharingScheme> for SchemeFile {
    fn from(s: &SharingScheme) -> Self {
        let mut orbits: Vec<[u64; 2]> = Vec::new();
        for &o in &s.orbit_id {
            match orbits.last_mut() {
                Some(run) if run[0] == o as u64 => run[1] += 1,
                _ => orbits.push([o as u64, 1]),
            }
        }
        SchemeFile {
            spec: s.spec.clone(),
            group: s.group.to_string(),
            orbit_count: s.orbit_count,
            orbits,
        }
    }
}

impl TryFrom<SchemeFile> for SharingScheme {
    type Error = Error;

    fn try_from(f: SchemeFile) -> Result<Self> {
        let group: GroupTag = f.group.parse()?;
        let dim = f.spec.dim();
        let mut orbit_id = Vec::with_capacity(dim * dim);
        for [label, run] in f.orbits {
            ensure!(
                label < f.orbit_count as u64,
                "orbit label {label} out of range"
            );
            orbit_id.extend(std::iter::repeat_n(label as u32, run as usize));
        }
        ensure!(
            orbit_id.len() == dim * dim,
            "scheme covers {} pairs, expected {}",
            orbit_id.len(),
            dim * dim
        );
        Ok(SharingScheme {
            spec: f.spec,
            group,
            orbit_id,
            orbit_count: f.orbit_count,
        })
    }
}

pub fn write_scheme(scheme: &SharingScheme, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&SchemeFile::from(scheme)).expect("scheme serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_scheme(path: &Path) -> Result<SharingScheme> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SchemeFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        kind: "scheme.json",
        msg: e.to_string(),
    })?;
    file.try_into()
}
