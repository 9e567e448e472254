//! The large-corpus sequence VAE.

mod model;
mod train;

use serde::{Deserialize, Serialize};

pub use model::{time_major_to_dmn, ForwardCache, LossParts, OuterModel};
pub use train::{
    evaluate, kl_weight_at, load_outer, save_outer, token_cross_entropy, train_outer, OuterEpochLog, OuterMeta,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterModelConfig {
    /// Latent dimension P.
    pub latent_dim: usize,
    /// Token positions per sequence N, including the EOS slot.
    pub max_len: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    /// Hidden fully connected widths between the convolutions and the latent head.
    pub fc_widths: Vec<usize>,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    /// KL weight ramps linearly from 0 to `kl_max_weight` over this many epochs.
    pub kl_warmup_epochs: usize,
    pub kl_max_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Probability of replacing a teacher-forced input token by PAD.
    pub word_dropout: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
}

impl Default for OuterModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 128,
            max_len: 72,
            conv_channels: vec![9, 9, 10],
            conv_kernels: vec![9, 9, 11],
            fc_widths: vec![],
            gru_hidden: 256,
            gru_layers: 3,
            kl_warmup_epochs: 10,
            kl_max_weight: 1.0,
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            word_dropout: 0.0,
            grad_clip: 0.0,
        }
    }
}

impl OuterModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 || self.gru_hidden == 0 || self.gru_layers == 0 {
            return bad("latent_dim, gru_hidden and gru_layers must be >= 1".into());
        }
        if self.conv_channels.is_empty() || self.conv_channels.len() != self.conv_kernels.len() {
            return bad("conv_channels and conv_kernels must be non-empty and of equal length".into());
        }
        if self
            .conv_channels
            .iter()
            .chain(&self.conv_kernels)
            .chain(&self.fc_widths)
            .any(|&w| w == 0)
        {
            return bad("all widths and kernel sizes must be >= 1".into());
        }
        let shrink: usize = self.conv_kernels.iter().map(|k| k - 1).sum();
        if self.max_len < 2 || shrink >= self.max_len {
            return bad(format!(
                "max_len {} too short for convolution kernels {:?}",
                self.max_len, self.conv_kernels
            ));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return bad("batch_size and learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.word_dropout) {
            return bad("word_dropout must be in [0, 1)".into());
        }
        if !(self.kl_max_weight >= 0.0) || !(self.grad_clip >= 0.0) {
            return bad("kl_max_weight and grad_clip must be >= 0".into());
        }
        Ok(())
    }
}
