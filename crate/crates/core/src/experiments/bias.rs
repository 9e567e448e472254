//! Success and extrapolation rates of latent-bias generation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chem::{selfies_to_smiles, ChemToolkit, DecodeMode};
use crate::error::{Error, Result};
use crate::generation::{
    best_record, generate_biased, generate_neighborhood, score_candidates, Candidate, GenerationRequest, ModelPair,
};
use crate::inner::LabeledDataset;
use crate::oracle::{score_one, PropertyOracle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasStudyConfig {
    /// Offsets added to the bound component, in raw latent units.
    pub biases: Vec<f64>,
    pub trials: usize,
    pub decode: DecodeMode,
    /// Explicit seed compound; when absent the best labeled record is used.
    pub seed_selfies: Option<String>,
    /// Candidates scoring above this count as extrapolations.
    pub extrapolation_threshold: f64,
    /// Radius of the neighborhood-sampling baseline; absent skips it.
    pub neighborhood_radius: Option<f64>,
}

impl Default for BiasStudyConfig {
    fn default() -> Self {
        Self {
            biases: vec![0.0, 0.5, 1.0, 2.0, 3.0],
            trials: 1000,
            decode: DecodeMode::Sample { temperature: 1.0 },
            seed_selfies: None,
            extrapolation_threshold: 4.5,
            neighborhood_radius: None,
        }
    }
}

impl BiasStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.biases.is_empty() || self.biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config(format!(
                "biases must be non-empty and finite, got {:?}",
                self.biases
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if let Some(r) = self.neighborhood_radius {
            if !(r > 0.0) {
                return Err(Error::Config("neighborhood_radius must be > 0".into()));
            }
        }
        self.decode.validate()
    }

    pub fn max_bias(&self) -> f64 {
        self.biases.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasLevel {
    /// Bias value, or `None` for the neighborhood baseline.
    pub bias: Option<f64>,
    pub trials: usize,
    pub valid: usize,
    pub scored: usize,
    pub unique: usize,
    pub success_rate: f64,
    pub extrapolation_rate: f64,
    pub mean_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub seed_selfies: String,
    pub seed_smiles: String,
    pub seed_score: f64,
    pub component: usize,
    pub rng_seed: u64,
    pub levels: Vec<BiasLevel>,
    pub neighborhood: Option<BiasLevel>,
}

impl BiasReport {
    pub fn level(&self, bias: f64) -> Option<&BiasLevel> {
        self.levels.iter().find(|l| l.bias == Some(bias))
    }
}

/// Success is a scored candidate strictly above the seed's score; invalid and
/// unscorable candidates count as failures.
fn summarize(bias: Option<f64>, candidates: &[Candidate], prop: &str, seed_score: f64, threshold: f64) -> BiasLevel {
    let scores: Vec<f64> = candidates
        .iter()
        .filter_map(|c| c.properties.get(prop).copied().flatten())
        .collect();
    let n = candidates.len() as f64;
    let mut unique: Vec<&str> = candidates
        .iter()
        .filter(|c| c.valid)
        .map(|c| c.smiles.as_str())
        .collect();
    unique.sort_unstable();
    unique.dedup();
    BiasLevel {
        bias,
        trials: candidates.len(),
        valid: candidates.iter().filter(|c| c.valid).count(),
        scored: scores.len(),
        unique: unique.len(),
        success_rate: scores.iter().filter(|&&s| s > seed_score).count() as f64 / n,
        extrapolation_rate: scores.iter().filter(|&&s| s > threshold).count() as f64 / n,
        mean_score: (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64),
    }
}

/// Generates `trials` candidates per bias from one seed compound and scores
/// them. Returns the report and every candidate (baseline last).
#[allow(clippy::too_many_arguments)]
pub fn run_bias_study(
    models: ModelPair,
    toolkit: &dyn ChemToolkit,
    oracle: &dyn PropertyOracle,
    labeled: &LabeledDataset,
    cfg: &BiasStudyConfig,
    rng_seed: u64,
) -> Result<(BiasReport, Vec<Candidate>)> {
    cfg.validate()?;
    let binding = models.inner.config.bindings[0];
    let prop = labeled
        .property_names
        .get(binding.property)
        .ok_or_else(|| Error::Config(format!("binding property {} out of range", binding.property)))?
        .clone();
    let (seed_selfies, conditions) = match &cfg.seed_selfies {
        Some(s) => (s.clone(), vec![0.0; labeled.condition_names.len()]),
        None => {
            let i = best_record(labeled, binding.property, binding.direction)
                .ok_or_else(|| Error::Empty("labeled dataset".into()))?;
            (
                labeled.records[i].selfies.clone(),
                labeled.records[i].conditions.clone(),
            )
        }
    };
    let seed_smiles = selfies_to_smiles(&seed_selfies)?;
    let seed_score = score_one(oracle, &seed_smiles)?;
    log::info!("bias study seed {seed_smiles} ({prop} = {seed_score:.4})");
    let mut levels = Vec::new();
    let mut all = Vec::new();
    for &bias in &cfg.biases {
        let req = GenerationRequest {
            seed_selfies: seed_selfies.clone(),
            conditions: conditions.clone(),
            component: binding.component,
            bias: binding.direction as f64 * bias,
            n_candidates: cfg.trials,
            decode: cfg.decode,
        };
        let mut cands = generate_biased(models, toolkit, &req, rng_seed)?;
        score_candidates(oracle, &mut cands)?;
        let level = summarize(Some(bias), &cands, &prop, seed_score, cfg.extrapolation_threshold);
        log::info!(
            "bias {bias}: success {:.3} extrapolation {:.3} valid {}/{} unique {}",
            level.success_rate,
            level.extrapolation_rate,
            level.valid,
            level.trials,
            level.unique
        );
        levels.push(level);
        all.extend(cands);
    }
    let neighborhood = match cfg.neighborhood_radius {
        Some(r) => {
            let mut cands = generate_neighborhood(
                models,
                toolkit,
                &seed_selfies,
                &conditions,
                r,
                cfg.trials,
                cfg.decode,
                rng_seed,
            )?;
            score_candidates(oracle, &mut cands)?;
            let level = summarize(None, &cands, &prop, seed_score, cfg.extrapolation_threshold);
            all.extend(cands);
            Some(level)
        }
        None => None,
    };
    Ok((
        BiasReport {
            seed_selfies,
            seed_smiles,
            seed_score,
            component: binding.component,
            rng_seed,
            levels,
            neighborhood,
        },
        all,
    ))
}

pub fn write_levels(path: &Path, reports: &[(String, BiasReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "model",
        "bias",
        "trials",
        "valid",
        "unique",
        "success_rate",
        "extrapolation_rate",
        "mean_score",
    ])?;
    for (name, r) in reports {
        for l in r.levels.iter().chain(&r.neighborhood) {
            w.write_record([
                name.clone(),
                l.bias.map_or("neighborhood".into(), |b| b.to_string()),
                l.trials.to_string(),
                l.valid.to_string(),
                l.unique.to_string(),
                l.success_rate.to_string(),
                l.extrapolation_rate.to_string(),
                l.mean_score.map_or(String::new(), |m| m.to_string()),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
