//! Run manifests: what a command read and wrote, by content hash.
//!
//! Manifests hold no timestamps or absolute paths, so re-running a command
//! with the same config reproduces them byte for byte. Wall time goes to a
//! separate `*.timing.json` file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::file_hash;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Paths relative to the work dir (or as given, outside it) to hashes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub command: String,
    pub wall_time_s: f64,
}

pub fn manifest_path(work_dir: &Path, command: &str) -> PathBuf {
    work_dir.join("manifests").join(format!("{command}.json"))
}

fn key(work_dir: &Path, p: &Path) -> String {
    p.strip_prefix(work_dir)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_hash: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: config_hash.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn input(&mut self, work_dir: &Path, path: &Path) -> Result<()> {
        self.inputs.insert(key(work_dir, path), file_hash(path)?);
        Ok(())
    }

    pub fn output(&mut self, work_dir: &Path, path: &Path) -> Result<()> {
        self.outputs.insert(key(work_dir, path), file_hash(path)?);
        Ok(())
    }

    pub fn write(&self, work_dir: &Path, wall_time_s: f64) -> Result<PathBuf> {
        let path = manifest_path(work_dir, &self.command);
        let dir = path.parent().expect("manifest dir");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let timing = dir.join(format!("{}.timing.json", self.command));
        let t = serde_json::to_string_pretty(&Timing {
            command: self.command.clone(),
            wall_time_s,
        })?;
        std::fs::write(&timing, t).map_err(|e| Error::io(&timing, e))?;
        Ok(path)
    }

    pub fn load(work_dir: &Path, command: &str) -> Result<Self> {
        let path = manifest_path(work_dir, command);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Refuses if any listed output changed on disk since it was recorded.
    pub fn verify_outputs(&self, work_dir: &Path) -> Result<()> {
        for (rel, expected) in &self.outputs {
            let p = work_dir.join(rel);
            let found = file_hash(&p)?;
            if &found != expected {
                return Err(Error::Lineage {
                    what: format!("{rel} (recorded by `{}`)", self.command),
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Ok(())
    }

    pub fn output_hash(&self, rel: &str) -> Option<&str> {
        self.outputs.get(rel).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_changed_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let w = dir.path();
        let f = w.join("a.txt");
        std::fs::write(&f, "one").unwrap();
        let mut m = Manifest::new("prepare", 1, "h");
        m.output(w, &f).unwrap();
        m.write(w, 0.5).unwrap();
        let back = Manifest::load(w, "prepare").unwrap();
        assert_eq!(back, m);
        assert!(back.outputs.contains_key("a.txt"));
        back.verify_outputs(w).unwrap();
        std::fs::write(&f, "two").unwrap();
        assert!(matches!(back.verify_outputs(w), Err(Error::Lineage { .. })));
    }
}
