use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::feature::WeightSpaceFeature;
use super::wsf::read_wsf;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// One dataset entry. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub wsf_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_target_path: Option<String>,
    /// Train/test split tag; absent means "train".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub items: Vec<ManifestItem>,
    #[serde(default)]
    pub generator_config: serde_json::Value,
}

impl Manifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path(dir.as_ref());
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            kind: "dataset manifest",
            msg: e.to_string(),
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = manifest_path(dir.as_ref());
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn split(&self, name: &str) -> Vec<&ManifestItem> {
        self.items
            .iter()
            .filter(|it| it.split.as_deref().unwrap_or("train") == name)
            .collect()
    }
}

/// Accepts either the dataset directory or the manifest file itself.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.extension().is_some_and(|e| e == "json") {
        p.to_path_buf()
    } else {
        p.join(MANIFEST_FILE)
    }
}

pub fn dataset_dir(p: &Path) -> PathBuf {
    if p.extension().is_some_and(|e| e == "json") {
        p.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        p.to_path_buf()
    }
}

pub fn load_item_feature(dir: &Path, item: &ManifestItem) -> Result<WeightSpaceFeature> {
    read_wsf(dir.join(&item.wsf_path))
}
