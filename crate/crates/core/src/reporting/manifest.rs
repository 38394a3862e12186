use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to re-execute a run. No timestamps or host details
/// are recorded, so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub spec: Value,
    pub config: Value,
    pub metrics: Value,
    /// Emitted files, relative to the output directory, sorted.
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, seed: u64) -> Self {
        RunManifest {
            run_id: String::new(),
            command: command.into(),
            seed,
            spec: Value::Null,
            config: Value::Null,
            metrics: Value::Null,
            files: Vec::new(),
        }
    }

    pub fn with_spec(mut self, spec: &impl Serialize) -> Result<Self> {
        self.spec = serde_json::to_value(spec)?;
        Ok(self)
    }

    pub fn with_config(mut self, config: &impl Serialize) -> Result<Self> {
        self.config = serde_json::to_value(config)?;
        Ok(self)
    }

    pub fn with_metrics(mut self, metrics: &impl Serialize) -> Result<Self> {
        self.metrics = serde_json::to_value(metrics)?;
        Ok(self)
    }

    pub fn add_file(&mut self, name: impl Into<String>) {
        self.files.push(name.into());
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Writes `manifest.json` into `out_dir`. The run id is a hash of the
/// command, seed, spec and config. Every listed file must exist.
pub fn persist_run(mut manifest: RunManifest, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    manifest.files.sort();
    manifest.files.dedup();
    for f in &manifest.files {
        let p = out_dir.join(f);
        if !p.is_file() {
            return Err(Error::InvalidArgument(format!(
                "manifest lists missing file {}",
                p.display()
            )));
        }
    }
    let identity = serde_json::to_vec(&(&manifest.command, manifest.seed, &manifest.spec, &manifest.config))?;
    manifest.run_id = format!("{:016x}", fnv1a(&identity));
    let path = out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
