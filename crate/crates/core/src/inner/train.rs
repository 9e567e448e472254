use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ExperimentalRecord, InnerModel, InnerModelConfig, LabeledDataset};
use crate::checkpoint::{param_hash, Checkpoint};
use crate::chem::onehot::pad_ids;
use crate::chem::TokenVocab;
use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::Parameterized;
use crate::outer::OuterModel;
use crate::rng::{standard_normal, substream};
use crate::stats::pearson;

/// Lineage and schema recorded in every inner checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerMeta {
    pub seed: u64,
    /// File hash of the outer checkpoint used for embedding.
    pub outer_hash: String,
    pub outer_latent_dim: usize,
    pub condition_names: Vec<String>,
    pub property_names: Vec<String>,
    pub train_records: usize,
}

impl InnerMeta {
    pub fn input_dim(&self) -> usize {
        self.outer_latent_dim + self.condition_names.len()
    }

    /// Refuses an outer checkpoint other than the one this model was trained on.
    pub fn verify_outer(&self, outer_hash: &str) -> Result<()> {
        if self.outer_hash != outer_hash {
            return Err(Error::Lineage {
                what: "outer checkpoint".into(),
                expected: self.outer_hash.clone(),
                found: outer_hash.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerEpochLog {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub corr: f64,
    pub total: f64,
    /// Batches that skipped the correlation term for being too small.
    pub corr_skipped_batches: usize,
    /// Validation Pearson correlation, indexed `[property][component]`.
    pub val_corr: Option<Vec<Vec<f64>>>,
    pub wall_time_s: f64,
}

pub struct InnerRun {
    pub model: InnerModel<f32>,
    pub meta: InnerMeta,
    pub log: Vec<InnerEpochLog>,
}

/// Outer posterior means of the records' SELFIES, each concatenated with the
/// record's condition vector: `(records, P + Q)`.
pub fn embed_records(
    outer: &OuterModel<f32>,
    vocab: &TokenVocab,
    records: &[ExperimentalRecord],
) -> Result<Array2<f32>> {
    let p = outer.latent_dim();
    let q = records.first().map_or(0, |r| r.conditions.len());
    let mut out = Array2::zeros((records.len(), p + q));
    let mut encoded = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let wrap = |e: Error| Error::Record {
            index: i,
            selfies: r.selfies.clone(),
            source: Box::new(e),
        };
        if r.conditions.len() != q {
            return Err(wrap(Error::Config(format!(
                "expected {q} conditions, found {}",
                r.conditions.len()
            ))));
        }
        let m = vocab.encode(&r.selfies).map_err(wrap)?;
        pad_ids(std::slice::from_ref(&m), outer.max_len()).map_err(wrap)?;
        encoded.push(m);
    }
    for (c, chunk) in encoded.chunks(256).enumerate() {
        let ids = pad_ids(chunk, outer.max_len())?;
        let mu = outer.encode(ids.view())?.mu;
        out.slice_mut(s![c * 256..c * 256 + chunk.len(), ..p]).assign(&mu);
    }
    for (i, r) in records.iter().enumerate() {
        for (j, &v) in r.conditions.iter().enumerate() {
            out[[i, p + j]] = v as f32;
        }
    }
    Ok(out)
}

fn property_matrix(records: &[ExperimentalRecord]) -> Array2<f64> {
    let b = records.first().map_or(0, |r| r.properties.len());
    Array2::from_shape_fn((records.len(), b), |(i, j)| records[i].properties[j])
}

/// Pearson correlation between every posterior-mean component and every
/// property, indexed `[property][component]`.
pub fn latent_correlation(model: &InnerModel<f32>, x: ArrayView2<f32>, y: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
    if x.nrows() < 2 {
        return Err(Error::Empty("latent correlation needs at least 2 records".into()));
    }
    let mu = model.encode(x)?.mu.mapv(f64::from);
    Ok(y.axis_iter(Axis(1))
        .map(|prop| {
            let prop = prop.to_vec();
            mu.axis_iter(Axis(1)).map(|c| pearson(&c.to_vec(), &prop)).collect()
        })
        .collect())
}

/// Trains an inner model on precomputed embeddings `x: (n, P + Q)` and
/// properties `y: (n, B)`, drawing from the seed's `inner-*` streams.
pub fn fit_inner(
    x: ArrayView2<f32>,
    y: ArrayView2<f64>,
    val: Option<(ArrayView2<f32>, ArrayView2<f64>)>,
    config: &InnerModelConfig,
    seed: u64,
) -> Result<(InnerModel<f32>, Vec<InnerEpochLog>)> {
    config.validate_for(x.ncols(), y.ncols())?;
    let n = x.nrows();
    if n == 0 || y.nrows() != n {
        return Err(Error::Empty(format!(
            "inner training needs matching, non-empty x ({n}) and y ({})",
            y.nrows()
        )));
    }
    let mut model = InnerModel::<f32>::new(config, x.ncols(), &mut substream(seed, "inner-init"))?;
    let mut opt = Adam::new(
        &model,
        AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut shuffle_rng = substream(seed, "inner-shuffle");
    let mut noise_rng = substream(seed, "inner-noise");
    let batch = config.batch_size.min(n);
    let y32 = y.mapv(|v| v as f32);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let start = Instant::now();
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut recon, mut kl, mut corr, mut total) = (0.0, 0.0, 0.0, 0.0);
        let mut skipped = 0;
        let mut corr_weight = 0.0;
        for (bi, idx) in order.chunks(batch).enumerate() {
            let xb = x.select(Axis(0), idx);
            let yb = y32.select(Axis(0), idx);
            let noise = standard_normal::<f32, _>(idx.len(), config.latent_dim, &mut noise_rng);
            let with_corr = idx.len() >= config.min_corr_batch;
            if !with_corr {
                skipped += 1;
                log::debug!(
                    "inner epoch {epoch} batch {bi}: {} rows, correlation term skipped",
                    idx.len()
                );
            }
            let (parts, cache) = model.forward_loss(xb.view(), yb.view(), noise.view(), with_corr)?;
            if !(parts.total.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    batch: bi,
                    recon: parts.recon,
                    kl: parts.kl,
                    corr: parts.corr,
                });
            }
            model.zero_grad();
            model.backward(&cache);
            opt.update(&mut model);
            let w = idx.len() as f64;
            recon += parts.recon * w;
            kl += parts.kl * w;
            total += parts.total * w;
            if with_corr {
                corr += parts.corr * w;
                corr_weight += w;
            }
        }
        let val_corr = match val {
            Some((vx, vy)) if vx.nrows() >= 2 => Some(latent_correlation(&model, vx, vy)?),
            _ => None,
        };
        let nf = n as f64;
        let rec = InnerEpochLog {
            epoch,
            recon: recon / nf,
            kl: kl / nf,
            corr: if corr_weight > 0.0 { corr / corr_weight } else { 0.0 },
            total: total / nf,
            corr_skipped_batches: skipped,
            val_corr,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "inner epoch {epoch}: recon {:.4} kl {:.4} corr {:.4} total {:.4}",
            rec.recon,
            rec.kl,
            rec.corr,
            rec.total
        );
        log.push(rec);
    }
    Ok((model, log))
}

/// Embeds the records with the frozen outer model and trains the inner model.
/// Fails if the outer parameters changed during the run.
pub fn train_inner(
    outer: &OuterModel<f32>,
    outer_hash: &str,
    vocab: &TokenVocab,
    train: &LabeledDataset,
    val: Option<&LabeledDataset>,
    config: &InnerModelConfig,
    seed: u64,
) -> Result<InnerRun> {
    let before = param_hash(outer);
    let x = embed_records(outer, vocab, &train.records)?;
    let y = property_matrix(&train.records);
    let val_data = match val {
        Some(v) if !v.is_empty() => Some((embed_records(outer, vocab, &v.records)?, property_matrix(&v.records))),
        _ => None,
    };
    let (model, log) = fit_inner(
        x.view(),
        y.view(),
        val_data.as_ref().map(|(a, b)| (a.view(), b.view())),
        config,
        seed,
    )?;
    let after = param_hash(outer);
    if before != after {
        return Err(Error::Lineage {
            what: "outer parameters (frozen during inner training)".into(),
            expected: before,
            found: after,
        });
    }
    let meta = InnerMeta {
        seed,
        outer_hash: outer_hash.to_string(),
        outer_latent_dim: outer.latent_dim(),
        condition_names: train.condition_names.clone(),
        property_names: train.property_names.clone(),
        train_records: train.len(),
    };
    Ok(InnerRun { model, meta, log })
}

pub fn save_inner(model: &InnerModel<f32>, meta: &InnerMeta, path: &Path) -> Result<String> {
    Checkpoint::from_model(
        "inner",
        serde_json::to_value(&model.config)?,
        serde_json::to_value(meta)?,
        model,
    )
    .save(path)
}

/// Loads an inner checkpoint; returns the model, its lineage and the file hash.
pub fn load_inner(path: &Path) -> Result<(InnerModel<f32>, InnerMeta, String)> {
    let (ck, hash) = Checkpoint::load(path)?;
    if ck.kind != "inner" {
        return Err(Error::Checkpoint(format!(
            "expected an inner checkpoint, found {:?}",
            ck.kind
        )));
    }
    let config: InnerModelConfig = serde_json::from_value(ck.config.clone())?;
    let meta: InnerMeta = serde_json::from_value(ck.meta.clone())?;
    let mut model = InnerModel::new(&config, meta.input_dim(), &mut substream(0, "checkpoint-shell"))?;
    ck.load_into(&mut model)?;
    Ok((model, meta, hash))
}
