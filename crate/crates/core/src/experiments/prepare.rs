use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::chem::{selfies_to_smiles, TokenVocab};
use crate::corpus::ingest;
use crate::error::{Error, Result};
use crate::inner::{ExperimentalRecord, LabeledDataset};
use crate::oracle::PropertyOracle;
use crate::rng::substream;

pub const OPEN_FILE: &str = "open.txt";
pub const LABELED_FILE: &str = "labeled.csv";
pub const VOCAB_FILE: &str = "vocab.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub open_count: usize,
    pub labeled_count: usize,
    /// Labeled records satisfy `filter_low < score < filter_high`.
    pub filter_low: f64,
    pub filter_high: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            open_count: 50_000,
            labeled_count: 1000,
            filter_low: 2.5,
            filter_high: 4.5,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.open_count == 0 || self.labeled_count == 0 {
            return Err(Error::Config("open_count and labeled_count must be >= 1".into()));
        }
        if !(self.filter_low < self.filter_high) {
            return Err(Error::Config(format!(
                "empty property filter ({}, {})",
                self.filter_low, self.filter_high
            )));
        }
        Ok(())
    }

    pub fn accepts(&self, score: f64) -> bool {
        self.filter_low < score && score < self.filter_high
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepareStats {
    pub source_lines: usize,
    pub rejected_too_long: usize,
    pub rejected_unconvertible: usize,
    pub scored: usize,
    pub rejected_invalid: usize,
    pub rejected_filter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub open: Vec<String>,
    pub labeled: LabeledDataset,
    pub vocab: TokenVocab,
    pub stats: PrepareStats,
}

/// Samples the open corpus uniformly without replacement, then draws labeled
/// records from the remainder (in the same random order), scoring each and
/// keeping those inside the filter until the quota is met. The vocabulary
/// covers both sets.
pub fn prepare_datasets(
    lines: &[String],
    spec: &DatasetSpec,
    max_len: usize,
    oracle: &dyn PropertyOracle,
    seed: u64,
) -> Result<PreparedData> {
    spec.validate()?;
    let ing = ingest(lines, max_len);
    let mut stats = PrepareStats {
        source_lines: lines.len(),
        rejected_too_long: ing.rejected_too_long,
        rejected_unconvertible: ing.rejected_unconvertible,
        ..Default::default()
    };
    let pool: Vec<String> = ing.molecules.into_iter().map(|(_, s)| s).collect();
    if pool.len() < spec.open_count + spec.labeled_count {
        return Err(Error::Exhausted(format!(
            "{} usable molecules, need at least {} open + {} labeled",
            pool.len(),
            spec.open_count,
            spec.labeled_count
        )));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut substream(seed, "prepare-split"));
    let open: Vec<String> = order[..spec.open_count].iter().map(|&i| pool[i].clone()).collect();
    let mut labeled = LabeledDataset::new(vec![], vec![oracle.name().to_string()]);
    for chunk in order[spec.open_count..].chunks(256) {
        if labeled.len() >= spec.labeled_count {
            break;
        }
        let selfies: Vec<&String> = chunk.iter().map(|&i| &pool[i]).collect();
        let smiles: Vec<String> = selfies.iter().map(|s| selfies_to_smiles(s)).collect::<Result<_>>()?;
        let scores = oracle.score_batch(&smiles)?;
        for (s, score) in selfies.into_iter().zip(scores) {
            if labeled.len() >= spec.labeled_count {
                break;
            }
            stats.scored += 1;
            match score {
                Ok(v) if spec.accepts(v) => labeled.push(ExperimentalRecord {
                    selfies: s.clone(),
                    conditions: vec![],
                    properties: vec![v],
                })?,
                Ok(_) => stats.rejected_filter += 1,
                Err(_) => stats.rejected_invalid += 1,
            }
        }
    }
    if labeled.len() < spec.labeled_count {
        return Err(Error::Exhausted(format!(
            "only {} of {} labeled records inside ({}, {}) after scoring {}",
            labeled.len(),
            spec.labeled_count,
            spec.filter_low,
            spec.filter_high,
            stats.scored
        )));
    }
    let vocab = TokenVocab::build(
        open.iter()
            .chain(labeled.records.iter().map(|r| &r.selfies))
            .map(String::as_str),
    )?;
    Ok(PreparedData {
        open,
        labeled,
        vocab,
        stats,
    })
}

pub fn write_open(path: &Path, open: &[String]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for s in open {
        writeln!(f, "{s}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

impl PreparedData {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_open(&dir.join(OPEN_FILE), &self.open)?;
        self.labeled.write_csv(&dir.join(LABELED_FILE))?;
        self.vocab.save(&dir.join(VOCAB_FILE))
    }
}
