//! Property oracles: the synthetic-accessibility score and a persistent
//! score cache keyed by canonical SMILES.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::chem::ChemToolkit;
use crate::error::{Error, Result};

pub trait PropertyOracle: Send + Sync {
    fn name(&self) -> &str;

    /// Inclusive bounds every returned score lies in.
    fn range(&self) -> (f64, f64);

    /// One result per input. The outer error is reserved for failures of the
    /// backing toolkit itself.
    fn score_batch(&self, smiles: &[String]) -> Result<Vec<Result<f64>>>;
}

/// Scores a single structure; invalid structures are an error.
pub fn score_one(oracle: &dyn PropertyOracle, smiles: &str) -> Result<f64> {
    oracle
        .score_batch(&[smiles.to_string()])?
        .pop()
        .expect("one result per input")
}

/// Scores every entry, isolating failures per item (a toolkit failure turns
/// into an error on each item rather than aborting).
pub fn batch_score(oracle: &dyn PropertyOracle, smiles: &[String]) -> Vec<(String, Result<f64>)> {
    if smiles.is_empty() {
        return Vec::new();
    }
    match oracle.score_batch(smiles) {
        Ok(scores) => smiles.iter().cloned().zip(scores).collect(),
        Err(e) => {
            let msg = e.to_string();
            smiles
                .iter()
                .map(|s| (s.clone(), Err(Error::Toolkit(msg.clone()))))
                .collect()
        }
    }
}

/// Append-only `canonical<TAB>score` file with an in-memory index.
#[derive(Debug, Default)]
pub struct ScoreCache {
    map: HashMap<String, f64>,
    file: Option<(PathBuf, File)>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a cache file and loads its entries.
    pub fn open(path: &Path) -> Result<Self> {
        let mut map = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                let Some((key, val)) = line.split_once('\t') else {
                    log::warn!("{}:{}: skipping malformed cache line", path.display(), i + 1);
                    continue;
                };
                match val.parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        map.insert(key.to_string(), v);
                    }
                    _ => log::warn!("{}:{}: skipping malformed cache value", path.display(), i + 1),
                }
            }
        } else if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            map,
            file: Some((path.to_path_buf(), file)),
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, canonical: &str) -> Option<f64> {
        self.map.get(canonical).copied()
    }

    pub fn insert(&mut self, canonical: &str, score: f64) -> Result<()> {
        if self.map.insert(canonical.to_string(), score).is_none() {
            if let Some((path, f)) = self.file.as_mut() {
                writeln!(f, "{canonical}\t{score}").map_err(|e| Error::io(path.as_path(), e))?;
            }
        }
        Ok(())
    }
}

/// Synthetic Accessibility score in `[1, 10]`, computed on the canonical
/// SMILES so that equivalent spellings get bit-identical scores.
pub struct SaOracle {
    toolkit: Arc<dyn ChemToolkit>,
    cache: Mutex<ScoreCache>,
}

impl SaOracle {
    pub fn new(toolkit: Arc<dyn ChemToolkit>, cache: ScoreCache) -> Self {
        Self {
            toolkit,
            cache: Mutex::new(cache),
        }
    }

    pub fn toolkit(&self) -> &Arc<dyn ChemToolkit> {
        &self.toolkit
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().expect("score cache lock").len()
    }
}

impl PropertyOracle for SaOracle {
    fn name(&self) -> &str {
        "sa_score"
    }

    fn range(&self) -> (f64, f64) {
        (1.0, 10.0)
    }

    fn score_batch(&self, smiles: &[String]) -> Result<Vec<Result<f64>>> {
        let canon = self.toolkit.canonical(smiles)?;
        let mut cache = self.cache.lock().expect("score cache lock");
        let mut missing: Vec<String> = canon
            .iter()
            .flatten()
            .filter(|c| !c.is_empty() && cache.get(c).is_none())
            .cloned()
            .collect();
        missing.sort();
        missing.dedup();
        if !missing.is_empty() {
            let scores = self.toolkit.sa_score(&missing)?;
            for (c, s) in missing.iter().zip(scores) {
                if let Some(s) = s {
                    cache.insert(c, s)?;
                }
            }
        }
        let (lo, hi) = self.range();
        Ok(smiles
            .iter()
            .zip(&canon)
            .map(|(s, c)| match c.as_deref() {
                Some(c) if !c.is_empty() => match cache.get(c) {
                    Some(v) if (lo..=hi).contains(&v) => Ok(v),
                    Some(v) => Err(Error::Toolkit(format!("score {v} for {s:?} outside [{lo}, {hi}]"))),
                    None => Err(Error::InvalidStructure(s.clone())),
                },
                _ => Err(Error::InvalidStructure(s.clone())),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_persists_and_appends() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/cache.tsv");
        let mut c = ScoreCache::open(&p).unwrap();
        c.insert("CCO", 1.98).unwrap();
        c.insert("CCO", 1.98).unwrap();
        c.insert("c1ccccc1", 1.0000000000000002).unwrap();
        drop(c);
        let c = ScoreCache::open(&p).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get("c1ccccc1"), Some(1.0000000000000002));
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 2);
    }
}
