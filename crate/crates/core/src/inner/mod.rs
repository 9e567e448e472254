//! The small-data VAE over outer latents concatenated with experimental
//! conditions, trained with an extra term that ties chosen latent components
//! to chosen properties.

mod model;
mod records;
mod train;

use serde::{Deserialize, Serialize};

pub use model::{corr_loss, total_loss, InnerForwardCache, InnerLossParts, InnerModel};
pub use records::{ExperimentalRecord, LabeledDataset, COND_PREFIX, PROP_PREFIX};
pub use train::{
    embed_records, fit_inner, latent_correlation, load_inner, save_inner, train_inner, InnerEpochLog, InnerMeta,
    InnerRun,
};

use crate::error::{Error, Result};

/// Ties property `property` to latent component `component`; `direction` -1
/// asks for anti-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyBinding {
    pub property: usize,
    pub component: usize,
    #[serde(default = "plus_one")]
    pub direction: i8,
}

fn plus_one() -> i8 {
    1
}

impl PropertyBinding {
    pub fn new(property: usize, component: usize) -> Self {
        Self {
            property,
            component,
            direction: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InnerModelConfig {
    /// Latent dimension R.
    pub latent_dim: usize,
    pub enc_widths: Vec<usize>,
    pub dec_widths: Vec<usize>,
    pub alpha: f64,
    pub bindings: Vec<PropertyBinding>,
    pub kl_weight: f64,
    pub epochs: usize,
    /// Upper bound; the effective batch is `min(batch_size, records)`.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Batches smaller than this skip the correlation term.
    pub min_corr_batch: usize,
}

impl Default for InnerModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            enc_widths: vec![256, 256],
            dec_widths: vec![256, 256],
            alpha: 10.0,
            bindings: vec![PropertyBinding::new(0, 0)],
            kl_weight: 1.0,
            epochs: 300,
            batch_size: 128,
            learning_rate: 1e-3,
            min_corr_batch: 8,
        }
    }
}

impl InnerModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 {
            return bad("inner latent_dim must be >= 1".into());
        }
        if self.enc_widths.iter().chain(&self.dec_widths).any(|&w| w == 0) {
            return bad("inner hidden widths must be >= 1".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.kl_weight >= 0.0) || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return bad("kl_weight must be >= 0; batch_size and learning_rate positive".into());
        }
        if self.min_corr_batch < 2 {
            return bad("min_corr_batch must be >= 2".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.bindings {
            if b.component >= self.latent_dim {
                return bad(format!(
                    "binding component {} out of range for latent_dim {}",
                    b.component, self.latent_dim
                ));
            }
            if b.direction != 1 && b.direction != -1 {
                return bad(format!("binding direction must be +1 or -1, got {}", b.direction));
            }
            if !seen.insert(b.component) {
                return bad(format!("latent component {} bound twice", b.component));
            }
        }
        Ok(())
    }

    /// Checks the dimension constraint `R < P + Q` and property indices.
    pub fn validate_for(&self, input_dim: usize, n_properties: usize) -> Result<()> {
        self.validate()?;
        if self.latent_dim >= input_dim {
            return Err(Error::Config(format!(
                "inner latent_dim {} must be smaller than the input dimension {input_dim}",
                self.latent_dim
            )));
        }
        if let Some(b) = self.bindings.iter().find(|b| b.property >= n_properties) {
            return Err(Error::Config(format!(
                "binding refers to property {} but the dataset has {n_properties}",
                b.property
            )));
        }
        Ok(())
    }
}
