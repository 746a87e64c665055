//! Output directory bookkeeping: every artifact is hashed as written, and a failed
//! command removes whatever it had already produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
    hashes: BTreeMap<String, String>,
    committed: bool,
}

impl Outputs {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
            hashes: BTreeMap::new(),
            committed: false,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(name);
        // Track before writing so a half-written file is also removed.
        self.written.push(path.clone());
        fs::write(&path, bytes)?;
        self.hashes.insert(name.to_string(), sha256_hex(bytes));
        log::debug!("wrote {}", path.display());
        Ok(())
    }

    pub fn hashes(&self) -> &BTreeMap<String, String> {
        &self.hashes
    }

    /// Writes `manifest.json` and keeps the outputs.
    pub fn finish<M: Serialize>(mut self, manifest: &M) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(manifest)? + "\n";
        self.written.push(self.dir.join("manifest.json"));
        fs::write(self.dir.join("manifest.json"), text)?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

#[derive(Debug, Serialize)]
pub struct InputRef {
    pub path: String,
    pub sha256: String,
}

impl InputRef {
    pub fn new(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        }
    }
}

/// Everything needed to rerun a command and reproduce its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub workload: Option<InputRef>,
    pub arch: Option<InputRef>,
    pub scheduler: Option<String>,
    pub params: serde_json::Value,
    pub seed: u64,
    pub out: String,
    pub artifacts: BTreeMap<String, String>,
}
