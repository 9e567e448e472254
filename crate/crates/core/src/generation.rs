//! Candidate generation: latent-bias steering along a bound inner component
//! and the neighborhood-sampling baseline.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chem::{selfies_to_smiles, ChemToolkit, DecodeMode, TokenVocab};
use crate::error::{Error, Result};
use crate::inner::{embed_records, ExperimentalRecord, InnerModel, LabeledDataset};
use crate::oracle::PropertyOracle;
use crate::outer::OuterModel;
use crate::rng::{standard_normal, substream};
use crate::stats::std_dev;

/// Rows decoded per outer-decoder call.
const DECODE_CHUNK: usize = 500;

/// A frozen outer/inner pair with the vocabulary they were trained on.
#[derive(Clone, Copy)]
pub struct ModelPair<'a> {
    pub outer: &'a OuterModel<f32>,
    pub inner: &'a InnerModel<f32>,
    pub vocab: &'a TokenVocab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub seed_selfies: String,
    pub conditions: Vec<f64>,
    pub component: usize,
    pub bias: f64,
    pub n_candidates: usize,
    pub decode: DecodeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub selfies: String,
    pub smiles: String,
    pub valid: bool,
    /// Filled by [`score_candidates`].
    pub properties: BTreeMap<String, Option<f64>>,
    pub seed_selfies: String,
    pub bias: f64,
    pub draw: usize,
    pub rng_seed: u64,
}

/// Posterior mean of the inner latent for one seed compound: `(1, R)`.
pub fn seed_latent(models: ModelPair, seed_selfies: &str, conditions: &[f64]) -> Result<Array2<f32>> {
    let rec = ExperimentalRecord {
        selfies: seed_selfies.to_string(),
        conditions: conditions.to_vec(),
        properties: Vec::new(),
    };
    let x = embed_records(models.outer, models.vocab, std::slice::from_ref(&rec))?;
    Ok(models.inner.encode(x.view())?.mu)
}

/// Copy of `z` with `bias` added to column `k` and nothing else touched.
pub fn bias_latent(z: ArrayView2<f32>, k: usize, bias: f64) -> Array2<f32> {
    let mut out = z.to_owned();
    out.column_mut(k).mapv_inplace(|v| v + bias as f32);
    out
}

/// Decodes inner latents through both decoders into candidates (unscored).
/// Row `i` uses the stream `(rng_seed, "{stream}-{first_draw + i}")`.
pub fn decode_latents(
    models: ModelPair,
    toolkit: &dyn ChemToolkit,
    z_inner: ArrayView2<f32>,
    decode: DecodeMode,
    rng_seed: u64,
    stream: &str,
) -> Result<Vec<(String, String, bool)>> {
    let p = models.outer.latent_dim();
    let full = models.inner.decode(z_inner)?;
    let z_outer = full.slice(ndarray::s![.., ..p]);
    let mut selfies = Vec::with_capacity(z_inner.nrows());
    for (c, chunk) in z_outer.axis_chunks_iter(Axis(0), DECODE_CHUNK).enumerate() {
        let mut rngs: Vec<ChaCha8Rng> = (0..chunk.nrows())
            .map(|i| substream(rng_seed, &format!("{stream}-{}", c * DECODE_CHUNK + i)))
            .collect();
        let (_, ids) = models.outer.decode_free(chunk, decode, Some(&mut rngs))?;
        for row in ids.axis_iter(Axis(0)) {
            selfies.push(models.vocab.ids_to_selfies(&row.to_vec()));
        }
    }
    let smiles: Vec<String> = selfies.iter().map(|s| selfies_to_smiles(s)).collect::<Result<_>>()?;
    let valid = toolkit.validate(&smiles)?;
    Ok(selfies
        .into_iter()
        .zip(smiles)
        .zip(valid)
        .map(|((a, b), v)| (a, b, v))
        .collect())
}

fn to_candidates(decoded: Vec<(String, String, bool)>, seed: &str, bias: f64, rng_seed: u64) -> Vec<Candidate> {
    decoded
        .into_iter()
        .enumerate()
        .map(|(draw, (selfies, smiles, valid))| Candidate {
            selfies,
            smiles,
            valid,
            properties: BTreeMap::new(),
            seed_selfies: seed.to_string(),
            bias,
            draw,
            rng_seed,
        })
        .collect()
}

/// Encode the seed, shift component `k` by `bias`, decode `n_candidates`
/// times. Invalid decodes are kept and flagged.
pub fn generate_biased(
    models: ModelPair,
    toolkit: &dyn ChemToolkit,
    req: &GenerationRequest,
    rng_seed: u64,
) -> Result<Vec<Candidate>> {
    if req.n_candidates == 0 {
        return Err(Error::Config("n_candidates must be >= 1".into()));
    }
    if req.component >= models.inner.latent_dim() {
        return Err(Error::Config(format!(
            "component {} out of range for inner latent dimension {}",
            req.component,
            models.inner.latent_dim()
        )));
    }
    let mu = seed_latent(models, &req.seed_selfies, &req.conditions)?;
    let z = bias_latent(mu.view(), req.component, req.bias);
    let batch = z
        .broadcast((req.n_candidates, z.ncols()))
        .expect("row broadcast")
        .to_owned();
    let decoded = decode_latents(models, toolkit, batch.view(), req.decode, rng_seed, "generate-draw")?;
    Ok(to_candidates(decoded, &req.seed_selfies, req.bias, rng_seed))
}

/// Baseline: isotropic Gaussian noise of scale `radius` on the whole inner
/// latent mean of the seed.
#[allow(clippy::too_many_arguments)]
pub fn generate_neighborhood(
    models: ModelPair,
    toolkit: &dyn ChemToolkit,
    seed_selfies: &str,
    conditions: &[f64],
    radius: f64,
    n_candidates: usize,
    decode: DecodeMode,
    rng_seed: u64,
) -> Result<Vec<Candidate>> {
    if !(radius > 0.0) || n_candidates == 0 {
        return Err(Error::Config("radius must be > 0 and n_candidates >= 1".into()));
    }
    let mu = seed_latent(models, seed_selfies, conditions)?;
    let r = mu.ncols();
    let mut z = Array2::zeros((n_candidates, r));
    for i in 0..n_candidates {
        let eps = standard_normal::<f32, _>(1, r, &mut substream(rng_seed, &format!("neighborhood-noise-{i}")));
        let row = &mu.row(0) + &(eps.row(0).mapv(|e| e * radius as f32));
        z.row_mut(i).assign(&row);
    }
    let decoded = decode_latents(models, toolkit, z.view(), decode, rng_seed, "neighborhood-draw")?;
    Ok(to_candidates(decoded, seed_selfies, 0.0, rng_seed))
}

/// Fills `properties[oracle.name()]` for valid candidates.
pub fn score_candidates(oracle: &dyn PropertyOracle, candidates: &mut [Candidate]) -> Result<()> {
    let idx: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].valid).collect();
    let smiles: Vec<String> = idx.iter().map(|&i| candidates[i].smiles.clone()).collect();
    let scores = if smiles.is_empty() {
        Vec::new()
    } else {
        oracle.score_batch(&smiles)?
    };
    for c in candidates.iter_mut() {
        c.properties.insert(oracle.name().to_string(), None);
    }
    for (&i, s) in idx.iter().zip(scores) {
        match s {
            Ok(v) => {
                candidates[i].properties.insert(oracle.name().to_string(), Some(v));
            }
            Err(e) => log::debug!("candidate {i} not scored: {e}"),
        }
    }
    Ok(())
}

/// Unique candidates by canonical SMILES: `(canonical, count, first draw)`,
/// in order of first appearance. Invalid candidates are left out.
pub fn dedup_canonical(toolkit: &dyn ChemToolkit, candidates: &[Candidate]) -> Result<Vec<(String, usize, usize)>> {
    let smiles: Vec<String> = candidates.iter().map(|c| c.smiles.clone()).collect();
    let canon = toolkit.canonical(&smiles)?;
    let mut order: Vec<(String, usize, usize)> = Vec::new();
    let mut pos: HashMap<String, usize> = HashMap::new();
    for (c, key) in candidates.iter().zip(canon) {
        let Some(key) = key.filter(|_| c.valid) else { continue };
        match pos.get(&key) {
            Some(&i) => order[i].1 += 1,
            None => {
                pos.insert(key.clone(), order.len());
                order.push((key, 1, c.draw));
            }
        }
    }
    Ok(order)
}

/// Training-set standard deviation of inner component `k` (posterior means),
/// so biases can be expressed in multiples of it.
pub fn component_std(inner: &InnerModel<f32>, embeddings: ArrayView2<f32>, k: usize) -> Result<f64> {
    let mu = inner.encode(embeddings)?.mu;
    let col: Vec<f64> = mu.column(k).iter().map(|&v| f64::from(v)).collect();
    Ok(std_dev(&col))
}

/// Index of the record with the best value of `property`: the largest when
/// `direction > 0`, the smallest otherwise. Ties go to the lowest index.
pub fn best_record(data: &LabeledDataset, property: usize, direction: i8) -> Option<usize> {
    let sign = if direction < 0 { -1.0 } else { 1.0 };
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in data.records.iter().enumerate() {
        let v = sign * r.properties[property];
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Writes candidates with columns `selfies, smiles, valid, prop:<name>...,
/// seed, bias, draw, rng_seed`.
pub fn write_candidates(path: &Path, candidates: &[Candidate]) -> Result<()> {
    let names: Vec<String> = candidates
        .iter()
        .flat_map(|c| c.properties.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["selfies".to_string(), "smiles".into(), "valid".into()];
    header.extend(names.iter().map(|n| format!("prop:{n}")));
    header.extend(["seed".to_string(), "bias".into(), "draw".into(), "rng_seed".into()]);
    w.write_record(&header)?;
    for c in candidates {
        let mut row = vec![c.selfies.clone(), c.smiles.clone(), c.valid.to_string()];
        for n in &names {
            row.push(
                c.properties
                    .get(n)
                    .copied()
                    .flatten()
                    .map_or(String::new(), |v| v.to_string()),
            );
        }
        row.extend([
            c.seed_selfies.clone(),
            c.bias.to_string(),
            c.draw.to_string(),
            c.rng_seed.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bias_touches_one_component() {
        let z = array![[0.5f32, -1.0, 2.0]];
        let b = bias_latent(z.view(), 1, 0.75);
        assert_eq!(b, array![[0.5f32, -0.25, 2.0]]);
        assert_eq!(bias_latent(z.view(), 2, 0.0), z);
    }

    #[test]
    fn best_record_respects_direction() {
        let mut ds = LabeledDataset::new(vec![], vec!["s".into()]);
        for v in [3.0, 4.0, 2.0, 4.0] {
            ds.push(ExperimentalRecord {
                selfies: "[C]".into(),
                conditions: vec![],
                properties: vec![v],
            })
            .unwrap();
        }
        assert_eq!(best_record(&ds, 0, 1), Some(1));
        assert_eq!(best_record(&ds, 0, -1), Some(2));
    }
}
