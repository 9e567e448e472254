//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chem::DecodeMode;
use crate::error::{Error, Result};
use crate::experiments::{BaselineConfig, BiasStudyConfig, CorrelationStudyConfig, DatasetSpec, SublistExperimentSpec};
use crate::inner::InnerModelConfig;
use crate::outer::OuterModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Source corpus, one SMILES or SELFIES per line (`.gz` allowed).
    pub corpus: PathBuf,
    /// Root of every artifact a run writes.
    pub work_dir: PathBuf,
    /// Persistent oracle cache; defaults to `<work_dir>/data/scores.tsv`.
    pub score_cache: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("data/moses_60k.smi.gz"),
            work_dir: PathBuf::from("work"),
            score_cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    /// Seed compound; the best labeled record when absent.
    pub seed_selfies: Option<String>,
    pub bias: f64,
    pub n_candidates: usize,
    pub decode: DecodeMode,
    /// Neighborhood sampling radius instead of a bias, when set.
    pub neighborhood_radius: Option<f64>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            seed_selfies: None,
            bias: 1.0,
            n_candidates: 100,
            decode: DecodeMode::Sample { temperature: 1.0 },
            neighborhood_radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    SaScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub oracle: OracleKind,
    /// Fraction of the open set held out to monitor outer training.
    pub outer_val_fraction: f64,
    /// Fraction of labeled records held out when training a single inner model.
    pub inner_val_fraction: f64,
    pub paths: Paths,
    pub dataset: DatasetSpec,
    pub outer: OuterModelConfig,
    pub inner: InnerModelConfig,
    pub generate: GenerateConfig,
    pub correlation: CorrelationStudyConfig,
    pub bias: BiasStudyConfig,
    pub sublist: SublistExperimentSpec,
    pub baseline: BaselineConfig,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            oracle: OracleKind::SaScore,
            outer_val_fraction: 0.02,
            inner_val_fraction: 0.2,
            paths: Paths::default(),
            dataset: DatasetSpec::default(),
            outer: OuterModelConfig::default(),
            inner: InnerModelConfig::default(),
            generate: GenerateConfig::default(),
            correlation: CorrelationStudyConfig::default(),
            bias: BiasStudyConfig::default(),
            sublist: SublistExperimentSpec::default(),
            baseline: BaselineConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses and validates a config file; relative paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed.
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!(
                "seed must be at most {}, got {}",
                i64::MAX,
                self.seed
            )));
        }
        self.dataset.validate()?;
        self.outer.validate()?;
        self.inner.validate()?;
        self.correlation.validate()?;
        self.bias.validate()?;
        self.sublist.validate()?;
        self.generate.decode.validate()?;
        if self.inner.bindings.is_empty() {
            return Err(Error::Config("inner model needs at least one property binding".into()));
        }
        for (name, f) in [
            ("outer_val_fraction", self.outer_val_fraction),
            ("inner_val_fraction", self.inner_val_fraction),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {f}")));
            }
        }
        if self.generate.n_candidates == 0 {
            return Err(Error::Config("generate.n_candidates must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn corpus(&self) -> PathBuf {
        self.resolve(&self.paths.corpus)
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.paths.work_dir)
    }

    pub fn score_cache(&self) -> PathBuf {
        match &self.paths.score_cache {
            Some(p) => self.resolve(p),
            None => self.work_dir().join("data").join("scores.tsv"),
        }
    }

    /// Hash of everything except `paths`, so relocating a run keeps it.
    pub fn hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(m) = v.as_object_mut() {
            m.remove("paths");
        }
        Ok(crate::checkpoint::sha256_hex(serde_json::to_string(&v)?.as_bytes()))
    }

    /// Hash of what the prepared data and the outer model depend on: seed,
    /// dataset, oracle, outer config and the corpus contents.
    pub fn outer_stage_hash(&self) -> Result<String> {
        let v = serde_json::json!({
            "seed": self.seed,
            "oracle": self.oracle,
            "dataset": self.dataset,
            "outer": self.outer,
            "outer_val_fraction": self.outer_val_fraction,
            "corpus": crate::checkpoint::file_hash(&self.corpus())?,
        });
        Ok(crate::checkpoint::sha256_hex(serde_json::to_string(&v)?.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn partial_file_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "seed = 7\n[paths]\ncorpus = \"c.smi\"\n[inner]\nalpha = 5.0\n").unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.inner.alpha, 5.0);
        assert_eq!(cfg.inner.latent_dim, InnerModelConfig::default().latent_dim);
        assert_eq!(cfg.corpus(), dir.path().join("c.smi"));
        assert_eq!(cfg.score_cache(), dir.path().join("work/data/scores.tsv"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 1\n").is_err());
        assert!(RunConfig::from_toml("[outer]\nlatent = 3\n").is_err());
    }

    #[test]
    fn seed_must_fit_toml() {
        let cfg = RunConfig {
            seed: 1 << 63,
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_paths() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.work_dir = "elsewhere".into();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
