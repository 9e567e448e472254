use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LossParts, OuterModel, OuterModelConfig};
use crate::checkpoint::Checkpoint;
use crate::chem::onehot::pad_ids;
use crate::chem::{EncodedMolecule, TokenVocab, PAD_ID, SELFIES_DIALECT};
use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::Parameterized;
use crate::rng::{standard_normal, substream};

/// Lineage recorded in every outer checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterMeta {
    pub epoch: usize,
    pub seed: u64,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub corpus_hash: String,
    pub selfies_dialect: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterEpochLog {
    pub epoch: usize,
    pub kl_weight: f64,
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
    pub val_recon: Option<f64>,
    pub val_kl: Option<f64>,
    pub wall_time_s: f64,
}

/// Linear warm-up: 0 at epoch 0, `max` from epoch `warmup` on.
pub fn kl_weight_at(epoch: usize, warmup: usize, max: f64) -> f64 {
    if warmup == 0 {
        max
    } else {
        max * (epoch as f64 / warmup as f64).min(1.0)
    }
}

/// Mean loss over `mols` at `z = mu` with KL weight 1.
pub fn evaluate(model: &OuterModel<f32>, mols: &[EncodedMolecule], batch_size: usize) -> Result<LossParts> {
    let mut acc = LossParts {
        recon: 0.0,
        kl: 0.0,
        total: 0.0,
    };
    if mols.is_empty() {
        return Ok(acc);
    }
    for chunk in mols.chunks(batch_size.max(1)) {
        let ids = pad_ids(chunk, model.max_len())?;
        let noise = Array2::zeros((chunk.len(), model.latent_dim()));
        let (parts, _) = model.forward_loss(ids.view(), noise.view(), 1.0, None)?;
        let w = chunk.len() as f64;
        acc.recon += parts.recon * w;
        acc.kl += parts.kl * w;
        acc.total += parts.total * w;
    }
    let n = mols.len() as f64;
    Ok(LossParts {
        recon: acc.recon / n,
        kl: acc.kl / n,
        total: acc.total / n,
    })
}

/// Teacher-forced cross-entropy per token at `z = mu`, averaged over the
/// non-PAD target positions (the EOS position included).
pub fn token_cross_entropy(model: &OuterModel<f32>, mols: &[EncodedMolecule]) -> Result<f64> {
    let (mut sum, mut count) = (0.0f64, 0usize);
    for chunk in mols.chunks(256) {
        let ids = pad_ids(chunk, model.max_len())?;
        let mu = model.encode(ids.view())?.mu;
        let logits = model.decode_teacher_forced(mu.view(), ids.view())?;
        let (d, m, n) = logits.dim();
        for b in 0..d {
            for t in 0..n {
                let target = ids[[b, t]];
                if target == PAD_ID {
                    continue;
                }
                let col: Vec<f64> = (0..m).map(|k| f64::from(logits[[b, k, t]])).collect();
                let mx = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + col.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
                sum += lse - col[target];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Empty("no non-PAD tokens".into()));
    }
    Ok(sum / count as f64)
}

pub fn save_outer(model: &OuterModel<f32>, meta: &OuterMeta, path: &Path) -> Result<String> {
    Checkpoint::from_model(
        "outer",
        serde_json::to_value(&model.config)?,
        serde_json::to_value(meta)?,
        model,
    )
    .save(path)
}

/// Loads an outer checkpoint; returns the model, its lineage and the file hash.
pub fn load_outer(path: &Path) -> Result<(OuterModel<f32>, OuterMeta, String)> {
    let (ck, hash) = Checkpoint::load(path)?;
    if ck.kind != "outer" {
        return Err(Error::Checkpoint(format!(
            "expected an outer checkpoint, found {:?}",
            ck.kind
        )));
    }
    let config: OuterModelConfig = serde_json::from_value(ck.config.clone())?;
    let meta: OuterMeta = serde_json::from_value(ck.meta.clone())?;
    let mut model = OuterModel::new(&config, meta.vocab_size, &mut substream(0, "checkpoint-shell"))?;
    ck.load_into(&mut model)?;
    Ok((model, meta, hash))
}

/// Trains the outer VAE from the seed's `outer-*` streams.
///
/// With `out_dir` set, the latest checkpoint (`outer-latest.ckpt`) is rewritten
/// after every epoch and one JSON record per epoch is appended to
/// `outer-train.jsonl`.
pub fn train_outer(
    train: &[EncodedMolecule],
    val: &[EncodedMolecule],
    vocab: &TokenVocab,
    config: &OuterModelConfig,
    seed: u64,
    corpus_hash: &str,
    out_dir: Option<&Path>,
) -> Result<(OuterModel<f32>, Vec<OuterEpochLog>)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("outer training corpus".into()));
    }
    let mut model = OuterModel::<f32>::new(config, vocab.len(), &mut substream(seed, "outer-init"))?;
    let mut opt = Adam::new(
        &model,
        AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut shuffle_rng = substream(seed, "outer-shuffle");
    let mut noise_rng = substream(seed, "outer-noise");
    let mut drop_rng = substream(seed, "outer-word-dropout");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut log_file = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join("outer-train.jsonl");
            Some(std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?)
        }
        None => None,
    };
    let start = Instant::now();
    for epoch in 0..config.epochs {
        let kl_w = kl_weight_at(epoch, config.kl_warmup_epochs, config.kl_max_weight);
        order.shuffle(&mut shuffle_rng);
        let (mut recon, mut kl, mut total) = (0.0, 0.0, 0.0);
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<EncodedMolecule> = idx.iter().map(|&i| train[i].clone()).collect();
            let ids = pad_ids(&batch, config.max_len)?;
            let noise = standard_normal::<f32, _>(batch.len(), config.latent_dim, &mut noise_rng);
            let drop = (config.word_dropout > 0.0).then(|| {
                Array2::from_shape_simple_fn(ids.raw_dim(), || drop_rng.random::<f64>() < config.word_dropout)
            });
            let (parts, cache) = model.forward_loss(ids.view(), noise.view(), kl_w, drop.as_ref())?;
            if !(parts.recon.is_finite() && parts.kl.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    batch: bi,
                    recon: parts.recon,
                    kl: parts.kl,
                    corr: 0.0,
                });
            }
            model.zero_grad();
            model.backward(&cache);
            if config.grad_clip > 0.0 {
                model.clip_grad_norm(config.grad_clip);
            }
            opt.update(&mut model);
            let w = batch.len() as f64;
            recon += parts.recon * w;
            kl += parts.kl * w;
            total += parts.total * w;
        }
        let n = train.len() as f64;
        let (val_recon, val_kl) = if val.is_empty() {
            (None, None)
        } else {
            let v = evaluate(&model, val, config.batch_size)?;
            (Some(v.recon), Some(v.kl))
        };
        let rec = OuterEpochLog {
            epoch,
            kl_weight: kl_w,
            recon: recon / n,
            kl: kl / n,
            total: total / n,
            val_recon,
            val_kl,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "outer epoch {epoch}: recon {:.4} kl {:.4} (w {kl_w:.2}) val_recon {:?}",
            rec.recon,
            rec.kl,
            rec.val_recon
        );
        if let (Some(f), Some(dir)) = (log_file.as_mut(), out_dir) {
            writeln!(f, "{}", serde_json::to_string(&rec)?).map_err(|e| Error::io(dir, e))?;
            let meta = OuterMeta {
                epoch: epoch + 1,
                seed,
                vocab_hash: vocab.hash(),
                vocab_size: vocab.len(),
                corpus_hash: corpus_hash.to_string(),
                selfies_dialect: SELFIES_DIALECT.to_string(),
            };
            save_outer(&model, &meta, &dir.join("outer-latest.ckpt"))?;
        }
        log.push(rec);
    }
    Ok((model, log))
}
