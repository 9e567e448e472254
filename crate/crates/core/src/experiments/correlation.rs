//! Latent-correlation sweep over the correlation-loss weight.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::chem::TokenVocab;
use crate::error::{Error, Result};
use crate::inner::{
    embed_records, fit_inner, latent_correlation, save_inner, InnerMeta, InnerModel, InnerModelConfig, LabeledDataset,
};
use crate::outer::OuterModel;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelationStudyConfig {
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub val_fraction: f64,
}

impl Default for CorrelationStudyConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 1.0, 5.0, 10.0],
            seeds: vec![0, 1, 2],
            val_fraction: 0.2,
        }
    }
}

impl CorrelationStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "correlation study needs at least one alpha and one seed".into(),
            ));
        }
        if self.alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config(format!(
                "alphas must be finite and >= 0, got {:?}",
                self.alphas
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Train/validation indices for one seed.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, "correlation-split"));
    let n_val = ((n as f64) * val_fraction).round() as usize;
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRun {
    pub alpha: f64,
    pub seed: u64,
    /// `[property][component]` Pearson correlation of posterior means.
    pub train_corr: Vec<Vec<f64>>,
    pub val_corr: Vec<Vec<f64>>,
    pub inner_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub runs: usize,
    pub failed: usize,
    /// Mean over seeds of |val corr| between the bound property and component.
    pub mean_abs_val_corr: f64,
    pub mean_abs_train_corr: f64,
    /// Component with the largest mean |val corr| for the bound property.
    pub argmax_component: usize,
    pub mean_abs_val_corr_by_component: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub property: String,
    pub component: usize,
    pub runs: Vec<CorrelationRun>,
    pub failures: Vec<(f64, u64, String)>,
    pub summary: Vec<AlphaSummary>,
}

impl CorrelationReport {
    pub fn summary_for(&self, alpha: f64) -> Option<&AlphaSummary> {
        self.summary.iter().find(|s| s.alpha == alpha)
    }
}

/// A trained model kept for later studies.
pub struct TrainedInner {
    pub alpha: f64,
    pub seed: u64,
    pub model: InnerModel<f32>,
    pub meta: InnerMeta,
}

/// One scatter row: `(alpha, seed, record, split, z[k], property)`.
pub type ScatterRow = (f64, u64, usize, &'static str, f64, f64);

pub struct CorrelationOutput {
    pub report: CorrelationReport,
    pub models: Vec<TrainedInner>,
    pub scatter: Vec<ScatterRow>,
}

/// Trains one inner model per (seed, alpha) on a per-seed 80/20 split and
/// records train and validation correlations. The bound property and
/// component come from the first binding of `base`. A failing run is
/// recorded and the sweep continues. With `ckpt_dir` set each model is saved
/// as `inner-a{alpha}-s{seed}.ckpt`.
#[allow(clippy::too_many_arguments)]
pub fn run_correlation_study(
    outer: &OuterModel<f32>,
    outer_hash: &str,
    vocab: &TokenVocab,
    data: &LabeledDataset,
    base: &InnerModelConfig,
    study: &CorrelationStudyConfig,
    ckpt_dir: Option<&Path>,
) -> Result<CorrelationOutput> {
    study.validate()?;
    base.validate()?;
    let binding = base.bindings[0];
    let (b, k) = (binding.property, binding.component);
    if b >= data.property_names.len() {
        return Err(Error::Config(format!("binding property {b} out of range")));
    }
    let x_all = embed_records(outer, vocab, &data.records)?;
    let y_all = Array2::from_shape_fn((data.len(), data.property_names.len()), |(i, j)| {
        data.records[i].properties[j]
    });
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut models = Vec::new();
    let mut scatter = Vec::new();
    for &seed in &study.seeds {
        let (tr, va) = split_indices(data.len(), study.val_fraction, seed);
        let (xt, yt) = (x_all.select(Axis(0), &tr), y_all.select(Axis(0), &tr));
        let (xv, yv) = (x_all.select(Axis(0), &va), y_all.select(Axis(0), &va));
        for &alpha in &study.alphas {
            let cfg = InnerModelConfig { alpha, ..base.clone() };
            let fitted = fit_inner(xt.view(), yt.view(), None, &cfg, seed).and_then(|(model, _log)| {
                let train_corr = latent_correlation(&model, xt.view(), yt.view())?;
                let val_corr = latent_correlation(&model, xv.view(), yv.view())?;
                Ok((model, train_corr, val_corr))
            });
            let (model, train_corr, val_corr) = match fitted {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("correlation study alpha {alpha} seed {seed} failed: {e}");
                    failures.push((alpha, seed, e.to_string()));
                    continue;
                }
            };
            log::info!(
                "alpha {alpha} seed {seed}: train corr {:.3} val corr {:.3}",
                train_corr[b][k],
                val_corr[b][k]
            );
            let meta = InnerMeta {
                seed,
                outer_hash: outer_hash.to_string(),
                outer_latent_dim: outer.latent_dim(),
                condition_names: data.condition_names.clone(),
                property_names: data.property_names.clone(),
                train_records: tr.len(),
            };
            let inner_hash = match ckpt_dir {
                Some(dir) => Some(save_inner(
                    &model,
                    &meta,
                    &dir.join(format!("inner-a{alpha}-s{seed}.ckpt")),
                )?),
                None => None,
            };
            let mu = model.encode(x_all.view())?.mu;
            for (split, idx) in [("train", &tr), ("val", &va)] {
                for &i in idx.iter() {
                    scatter.push((alpha, seed, i, split, f64::from(mu[[i, k]]), y_all[[i, b]]));
                }
            }
            runs.push(CorrelationRun {
                alpha,
                seed,
                train_corr,
                val_corr,
                inner_hash,
            });
            models.push(TrainedInner {
                alpha,
                seed,
                model,
                meta,
            });
        }
    }
    let summary = study
        .alphas
        .iter()
        .map(|&alpha| summarize(alpha, &runs, &failures, b, k, base.latent_dim))
        .collect();
    Ok(CorrelationOutput {
        report: CorrelationReport {
            property: data.property_names[b].clone(),
            component: k,
            runs,
            failures,
            summary,
        },
        models,
        scatter,
    })
}

fn summarize(
    alpha: f64,
    runs: &[CorrelationRun],
    failures: &[(f64, u64, String)],
    b: usize,
    k: usize,
    r: usize,
) -> AlphaSummary {
    let mine: Vec<&CorrelationRun> = runs.iter().filter(|x| x.alpha == alpha).collect();
    let n = mine.len().max(1) as f64;
    let by_comp: Vec<f64> = (0..r)
        .map(|c| mine.iter().map(|x| x.val_corr[b][c].abs()).sum::<f64>() / n)
        .collect();
    let argmax = (0..r).fold(0, |best, c| if by_comp[c] > by_comp[best] { c } else { best });
    AlphaSummary {
        alpha,
        runs: mine.len(),
        failed: failures.iter().filter(|f| f.0 == alpha).count(),
        mean_abs_val_corr: by_comp[k],
        mean_abs_train_corr: mine.iter().map(|x| x.train_corr[b][k].abs()).sum::<f64>() / n,
        argmax_component: argmax,
        mean_abs_val_corr_by_component: by_comp,
    }
}

pub fn write_scatter(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["alpha", "seed", "record", "split", "z", "property"])?;
    for (alpha, seed, i, split, z, y) in rows {
        w.write_record([
            alpha.to_string(),
            seed.to_string(),
            i.to_string(),
            split.to_string(),
            z.to_string(),
            y.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_complete() {
        let (tr, va) = split_indices(103, 0.2, 7);
        assert_eq!(va.len(), 21);
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert_eq!(split_indices(103, 0.2, 7), (tr, va));
    }
}
