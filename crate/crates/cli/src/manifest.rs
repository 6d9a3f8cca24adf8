//! The JSON manifest that ties stage outputs together.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pano_core::io::write_atomic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub tool_version: String,
    /// SHA-256 of the stage parameters as JSON.
    pub config_hash: String,
    pub params: serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    /// Artifact name to path. Relative paths are relative to the manifest.
    #[serde(default)]
    pub artifacts: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
    /// Directory the manifest was loaded from or will be saved to.
    #[serde(skip)]
    pub dir: PathBuf,
}

impl PipelineManifest {
    pub fn new(dir: &Path) -> Self {
        PipelineManifest {
            tool_version: TOOL_VERSION.to_string(),
            dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    /// Loads a manifest file (or `manifest.json` inside a directory) and
    /// checks that every referenced artifact exists.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file)
            .with_context(|| format!("cannot read manifest {}", file.display()))?;
        let mut m: PipelineManifest = serde_json::from_str(&text)
            .with_context(|| format!("malformed manifest {}", file.display()))?;
        m.dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(b) = m.baseline {
            if b.is_nan() || b <= 0.0 {
                bail!(
                    "manifest {}: baseline must be positive, got {b}",
                    file.display()
                );
            }
        }
        for (name, p) in &m.artifacts {
            let full = m.dir.join(p);
            if !full.exists() {
                bail!(
                    "manifest {}: artifact {name} missing at {}",
                    file.display(),
                    full.display()
                );
            }
        }
        Ok(m)
    }

    /// Absolute path of a named artifact.
    pub fn artifact(&self, name: &str) -> Result<PathBuf> {
        match self.artifacts.get(name) {
            Some(p) => Ok(self.dir.join(p)),
            None => bail!("manifest has no {name:?} artifact"),
        }
    }

    /// Re-roots the manifest at `dir`, keeping artifact paths valid.
    pub fn moved_to(mut self, dir: &Path) -> Result<Self> {
        if same_dir(&self.dir, dir) {
            return Ok(self);
        }
        let old = std::mem::take(&mut self.artifacts);
        for (name, p) in old {
            let full = std::path::absolute(self.dir.join(p))?;
            self.artifacts.insert(name, full);
        }
        self.dir = dir.to_path_buf();
        Ok(self)
    }

    /// Registers an artifact written to `path`.
    pub fn set_artifact(&mut self, name: &str, path: &Path) {
        let rel = path.strip_prefix(&self.dir).unwrap_or(path);
        self.artifacts.insert(name.to_string(), rel.to_path_buf());
    }

    pub fn record_stage(&mut self, stage: &str, params: &impl Serialize) -> Result<()> {
        let params = serde_json::to_value(params)?;
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                tool_version: TOOL_VERSION.to_string(),
                config_hash: config_hash(&params),
                params,
            },
        );
        self.tool_version = TOOL_VERSION.to_string();
        Ok(())
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = self.dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (std::path::absolute(a), std::path::absolute(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

pub fn config_hash(params: &serde_json::Value) -> String {
    let digest = Sha256::digest(params.to_string().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = PipelineManifest::new(dir.path());
        m.baseline = Some(0.2);
        let file = dir.path().join("a.pfm");
        std::fs::write(&file, b"x").unwrap();
        m.set_artifact("a", &file);
        m.record_stage("synth", &serde_json::json!({"height": 8}))
            .unwrap();
        m.save().unwrap();
        let back = PipelineManifest::load(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.artifacts["a"], PathBuf::from("a.pfm"));
        assert_eq!(back.artifact("a").unwrap(), file);

        std::fs::remove_file(&file).unwrap();
        assert!(PipelineManifest::load(dir.path()).is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&serde_json::json!({"x": 1, "y": [1, 2]}));
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&serde_json::json!({"x": 1, "y": [1, 2]})));
        assert_ne!(a, config_hash(&serde_json::json!({"x": 2, "y": [1, 2]})));
    }
}
