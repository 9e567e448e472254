use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header prefix for experimental-condition columns.
pub const COND_PREFIX: &str = "cond:";
/// Header prefix for property columns.
pub const PROP_PREFIX: &str = "prop:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentalRecord {
    pub selfies: String,
    pub conditions: Vec<f64>,
    pub properties: Vec<f64>,
}

/// A labeled table: `selfies`, then `cond:<name>` columns, then `prop:<name>`
/// columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub condition_names: Vec<String>,
    pub property_names: Vec<String>,
    pub records: Vec<ExperimentalRecord>,
}

impl LabeledDataset {
    pub fn new(condition_names: Vec<String>, property_names: Vec<String>) -> Self {
        Self {
            condition_names,
            property_names,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: ExperimentalRecord) -> Result<()> {
        self.check(self.records.len(), &record)?;
        self.records.push(record);
        Ok(())
    }

    fn check(&self, index: usize, r: &ExperimentalRecord) -> Result<()> {
        if r.conditions.len() != self.condition_names.len() || r.properties.len() != self.property_names.len() {
            return Err(Error::Config(format!(
                "record {index} has {} conditions and {} properties, schema has {} and {}",
                r.conditions.len(),
                r.properties.len(),
                self.condition_names.len(),
                self.property_names.len()
            )));
        }
        if let Some(v) = r.properties.iter().chain(&r.conditions).find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("record {index} has a non-finite value {v}")));
        }
        Ok(())
    }

    pub fn property_index(&self, name: &str) -> Option<usize> {
        self.property_names.iter().position(|n| n == name)
    }

    /// Values of property `b` over all records.
    pub fn property(&self, b: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.properties[b]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            condition_names: self.condition_names.clone(),
            property_names: self.property_names.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        std::iter::once("selfies".to_string())
            .chain(self.condition_names.iter().map(|n| format!("{COND_PREFIX}{n}")))
            .chain(self.property_names.iter().map(|n| format!("{PROP_PREFIX}{n}")))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(self.header())?;
        for r in &self.records {
            let row = std::iter::once(r.selfies.clone())
                .chain(r.conditions.iter().chain(&r.properties).map(|v| format!("{v}")));
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("selfies") {
            return Err(Error::Config(format!(
                "{}: first column must be `selfies`, found {:?}",
                path.display(),
                header.first()
            )));
        }
        let mut conds = Vec::new();
        let mut props = Vec::new();
        for h in &header[1..] {
            if let Some(n) = h.strip_prefix(COND_PREFIX) {
                if !props.is_empty() {
                    return Err(Error::Config(format!(
                        "{}: condition column {h:?} after property columns",
                        path.display()
                    )));
                }
                conds.push(n.to_string());
            } else if let Some(n) = h.strip_prefix(PROP_PREFIX) {
                props.push(n.to_string());
            } else {
                return Err(Error::Config(format!(
                    "{}: column {h:?} is neither `{COND_PREFIX}*` nor `{PROP_PREFIX}*`",
                    path.display()
                )));
            }
        }
        let q = conds.len();
        let mut ds = Self::new(conds, props);
        for (i, row) in rd.records().enumerate() {
            let row = row?;
            let nums = row
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("{}: row {}: bad number {v:?}", path.display(), i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            ds.push(ExperimentalRecord {
                selfies: row[0].to_string(),
                conditions: nums[..q].to_vec(),
                properties: nums[q..].to_vec(),
            })?;
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let mut ds = LabeledDataset::new(vec!["temp".into()], vec!["sa".into(), "yield".into()]);
        ds.push(ExperimentalRecord {
            selfies: "[C][O]".into(),
            conditions: vec![300.5],
            properties: vec![2.75, 0.1],
        })
        .unwrap();
        ds.write_csv(&p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap().lines().next().unwrap(),
            "selfies,cond:temp,prop:sa,prop:yield"
        );
        assert_eq!(LabeledDataset::read_csv(&p).unwrap(), ds);
    }

    #[test]
    fn rejects_unknown_columns_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "selfies,sa\n[C],1\n").unwrap();
        assert!(matches!(LabeledDataset::read_csv(&p), Err(Error::Config(_))));
        std::fs::write(&p, "selfies,prop:sa\n[C],nan\n").unwrap();
        assert!(matches!(LabeledDataset::read_csv(&p), Err(Error::Config(_))));
    }
}
