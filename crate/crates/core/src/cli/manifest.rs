//! Per-stage manifests: content hashes of inputs and outputs, the seed and
//! the tool version. Later stages check their inputs against the hashes an
//! earlier stage recorded for them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::missing("manifest", path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn key(path: &Path, out_dir: &Path) -> String {
    path.strip_prefix(out_dir).unwrap_or(path).display().to_string()
}

pub struct ManifestBuilder<'a> {
    out_dir: &'a Path,
    manifest: Manifest,
}

impl<'a> ManifestBuilder<'a> {
    pub fn new(stage: &str, seed: u64, out_dir: &'a Path) -> Self {
        Self {
            out_dir,
            manifest: Manifest {
                stage: stage.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                seed,
                params: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        }
    }

    pub fn param(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.manifest.params.insert(name.into(), v);
        self
    }

    /// Records an input after checking it against any earlier manifest in
    /// the output directory that produced it.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let hash = sha256_file(path)?;
        verify_artifact(self.out_dir, path, &hash)?;
        self.manifest.inputs.insert(key(path, self.out_dir), hash);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let hash = sha256_file(path)?;
        self.manifest.outputs.insert(key(path, self.out_dir), hash);
        Ok(self)
    }

    pub fn write(&self) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(format!("manifest_{}.json", self.manifest.stage));
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| CliError::internal(&self.manifest.stage, e.to_string()))?;
        Ok(path)
    }
}

fn read_manifests(out_dir: &Path) -> Vec<Manifest> {
    let Ok(entries) = fs::read_dir(out_dir) else {
        return Vec::new();
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("manifest_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .filter_map(|p| fs::read_to_string(p).ok())
        .filter_map(|t| serde_json::from_str(&t).ok())
        .collect()
}

fn verify_artifact(out_dir: &Path, path: &Path, hash: &str) -> Result<(), CliError> {
    let k = key(path, out_dir);
    for m in read_manifests(out_dir) {
        if let Some(recorded) = m.outputs.get(&k) {
            if recorded != hash {
                return Err(CliError::validation(
                    &m.stage,
                    format!("{k} changed since stage `{}` wrote it", m.stage),
                ));
            }
        }
    }
    Ok(())
}
