use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const EOS: &str = "<eos>";
pub const PAD_ID: usize = 0;
pub const EOS_ID: usize = 1;

/// Splits a SELFIES string into its `[...]` tokens.
///
/// Anything outside brackets (including fragment dots) or a nested / unclosed
/// bracket is a parse error.
pub fn split_tokens(selfies: &str) -> Result<Vec<&str>> {
    let err = |reason: &str| Error::Parse {
        input: selfies.to_string(),
        reason: reason.to_string(),
    };
    let mut out = Vec::new();
    let mut rest = selfies;
    while !rest.is_empty() {
        if !rest.starts_with('[') {
            return Err(err("text outside of [...] tokens"));
        }
        let close = rest.find(']').ok_or_else(|| err("unbalanced brackets"))?;
        let tok = &rest[..=close];
        if tok[1..].contains('[') {
            return Err(err("unbalanced brackets"));
        }
        if tok.len() == 2 {
            return Err(err("empty token []"));
        }
        out.push(tok);
        rest = &rest[close + 1..];
    }
    Ok(out)
}

/// Token table: PAD and EOS first, then chemical tokens in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    /// Builds the vocabulary of every token in `corpus`.
    pub fn build<'a, I>(corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut set = BTreeSet::new();
        let mut n = 0usize;
        for s in corpus {
            n += 1;
            for t in split_tokens(s)? {
                set.insert(t.to_string());
            }
        }
        if n == 0 {
            return Err(Error::Empty("cannot build a vocabulary from an empty corpus".into()));
        }
        Self::from_tokens([PAD.to_string(), EOS.to_string()].into_iter().chain(set))
    }

    /// Wraps an explicit token list, which must start with PAD, EOS.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().collect();
        if tokens.len() < 2 || tokens[PAD_ID] != PAD || tokens[EOS_ID] != EOS {
            return Err(Error::Config(format!("vocabulary must start with {PAD} and {EOS}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if i >= 2 && (split_tokens(t)?.len() != 1) {
                return Err(Error::Config(format!("malformed vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Tokenizes `selfies`, failing on any token outside the vocabulary.
    pub fn encode(&self, selfies: &str) -> Result<EncodedMolecule> {
        let mut ids = split_tokens(selfies)?
            .into_iter()
            .map(|t| {
                self.index_of(t).ok_or_else(|| Error::UnknownToken {
                    token: t.to_string(),
                    input: selfies.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ids.push(EOS_ID);
        Ok(EncodedMolecule {
            token_ids: ids,
            source_selfies: selfies.to_string(),
        })
    }

    /// Concatenates chemical tokens up to the first EOS; PAD is skipped.
    pub fn ids_to_selfies(&self, ids: &[usize]) -> String {
        let mut s = String::new();
        for &id in ids {
            match id {
                EOS_ID => break,
                PAD_ID => {}
                _ => s.push_str(&self.tokens[id]),
            }
        }
        s
    }

    /// Hex SHA-256 of the ordered token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        format!("{:x}", h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for t in &self.tokens {
            writeln!(f, "{t}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(str::to_string))
    }
}

/// Token ids of one molecule, terminated by a single EOS (unpadded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMolecule {
    pub token_ids: Vec<usize>,
    pub source_selfies: String,
}

impl EncodedMolecule {
    /// Number of chemical tokens, excluding EOS.
    pub fn chem_len(&self) -> usize {
        self.token_ids.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_corpus() {
        let v = TokenVocab::build(["[C][C]"]).unwrap();
        assert_eq!(v.tokens(), &[PAD, EOS, "[C]"]);
    }

    #[test]
    fn counts_distinct_tokens() {
        let v = TokenVocab::build(["[C][=C][N][C][C][Ring1][Branch1_1]"]).unwrap();
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(TokenVocab::build(std::iter::empty()), Err(Error::Empty(_))));
    }

    #[test]
    fn malformed_tokens_name_the_input() {
        match TokenVocab::build(["[C]", "[C][N"]) {
            Err(Error::Parse { input, .. }) => assert_eq!(input, "[C][N"),
            other => panic!("{other:?}"),
        }
        assert!(split_tokens("[C[N]]").is_err());
        assert!(split_tokens("[C].[C]").is_err());
    }

    #[test]
    fn unknown_token_is_hard_error() {
        let v = TokenVocab::build(["[C][N]"]).unwrap();
        assert!(matches!(v.encode("[C][O]"), Err(Error::UnknownToken { .. })));
        let e = v.encode("[N][C]").unwrap();
        assert_eq!(e.token_ids, vec![3, 2, EOS_ID]);
        assert_eq!(v.ids_to_selfies(&e.token_ids), "[N][C]");
    }

    #[test]
    fn file_round_trip() {
        let v = TokenVocab::build(["[C][=O][Branch1_1]"]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        assert_eq!(TokenVocab::load(&p).unwrap(), v);
    }
}
