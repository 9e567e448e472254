//! Reading molecule corpora (SMILES or SELFIES, optionally gzipped).

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::chem::{smiles_to_selfies, split_tokens};
use crate::error::{Error, Result};

/// Non-empty, trimmed lines of a text file; `.gz` files are decompressed.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if !line.is_empty() && !line.eq_ignore_ascii_case("smiles") {
            out.push(line.to_string());
        }
    }
    Ok(out)
}

/// A line as SELFIES: lines starting with `[` are taken as SELFIES, anything
/// else is converted from SMILES.
pub fn to_selfies(line: &str) -> Result<String> {
    if line.starts_with('[') {
        split_tokens(line)?;
        Ok(line.to_string())
    } else {
        smiles_to_selfies(line)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    /// `(source line, selfies)` pairs that passed.
    pub molecules: Vec<(String, String)>,
    pub rejected_too_long: usize,
    pub rejected_unconvertible: usize,
}

/// Converts lines to SELFIES and drops entries that fail conversion, contain
/// several fragments, are empty, or need more than `max_len - 1` tokens.
pub fn ingest(lines: &[String], max_len: usize) -> Ingested {
    let mut out = Ingested::default();
    for line in lines {
        match to_selfies(line) {
            Ok(s) => match split_tokens(&s) {
                Ok(t) if t.is_empty() => out.rejected_unconvertible += 1,
                Ok(t) if t.len() + 1 > max_len => out.rejected_too_long += 1,
                Ok(_) => out.molecules.push((line.clone(), s)),
                Err(_) => out.rejected_unconvertible += 1,
            },
            Err(_) => out.rejected_unconvertible += 1,
        }
    }
    if out.rejected_too_long + out.rejected_unconvertible > 0 {
        log::info!(
            "ingestion kept {} of {} entries ({} longer than {} tokens, {} unconvertible)",
            out.molecules.len(),
            lines.len(),
            out.rejected_too_long,
            max_len - 1,
            out.rejected_unconvertible
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_lines() {
        let lines: Vec<String> = ["C1=CNCC1", "[C][O]", "CC.O", "C*C", "CCCCCCCCCC"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let ing = ingest(&lines, 6);
        let kept: Vec<&str> = ing.molecules.iter().map(|(_, s)| s.as_str()).collect();
        assert_eq!(kept, vec!["[C][O]"]);
        assert_eq!(ing.rejected_too_long, 2);
        assert_eq!(ing.rejected_unconvertible, 2);
    }
}
