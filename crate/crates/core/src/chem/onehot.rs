use ndarray::{Array2, Array3, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{EncodedMolecule, TokenVocab, PAD_ID};
use crate::error::{Error, Result};

/// One-hot array of shape `(d, M, N)`.
///
/// `ids` keeps the same content as a `(d, N)` index matrix, which is what the
/// models actually consume.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotBatch {
    pub data: Array3<f32>,
    pub ids: Array2<usize>,
}

impl OneHotBatch {
    pub fn batch_size(&self) -> usize {
        self.data.dim().0
    }

    pub fn vocab_size(&self) -> usize {
        self.data.dim().1
    }

    pub fn max_len(&self) -> usize {
        self.data.dim().2
    }
}

/// Pads each molecule to `n` positions as an index matrix.
pub fn pad_ids(batch: &[EncodedMolecule], n: usize) -> Result<Array2<usize>> {
    let mut ids = Array2::from_elem((batch.len(), n), PAD_ID);
    for (i, m) in batch.iter().enumerate() {
        if m.token_ids.len() > n {
            return Err(Error::TooLong {
                index: i,
                len: m.chem_len(),
                limit: n.saturating_sub(1),
                max_len: n,
            });
        }
        for (j, &t) in m.token_ids.iter().enumerate() {
            ids[[i, j]] = t;
        }
    }
    Ok(ids)
}

/// Builds the `(d, M, N)` one-hot array; sequences longer than `n - 1`
/// chemical tokens are rejected.
pub fn encode_onehot(batch: &[EncodedMolecule], vocab: &TokenVocab, n: usize) -> Result<OneHotBatch> {
    let ids = pad_ids(batch, n)?;
    let m = vocab.len();
    let mut data = Array3::zeros((batch.len(), m, n));
    for ((i, j), &t) in ids.indexed_iter() {
        if t >= m {
            return Err(Error::Shape {
                expected: format!("token id < {m}"),
                got: t.to_string(),
            });
        }
        data[[i, t, j]] = 1.0;
    }
    Ok(OneHotBatch { data, ids })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DecodeMode {
    Argmax,
    Sample { temperature: f64 },
}

impl DecodeMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            DecodeMode::Sample { temperature } if !(*temperature > 0.0) => Err(Error::Config(format!(
                "sampling temperature must be > 0, got {temperature}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<I: IntoIterator<Item = f32>>(values: I) -> usize {
    let mut best = 0;
    let mut best_v = f32::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Draws an index from `softmax(logits / temperature)`.
pub fn sample_softmax<R: Rng + ?Sized>(logits: &[f32], temperature: f64, rng: &mut R) -> usize {
    let max = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    let weights: Vec<f64> = logits.iter().map(|&l| ((l as f64 - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    argmax(logits.iter().copied())
}

/// Picks one token per position of `(d, M, N)` logits and returns SELFIES,
/// read up to the first EOS (or all N positions if none is emitted).
pub fn decode_logits<R: Rng + ?Sized>(
    logits: ArrayView3<f32>,
    vocab: &TokenVocab,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<Vec<String>> {
    mode.validate()?;
    let (_, m, n) = logits.dim();
    if m != vocab.len() {
        return Err(Error::Shape {
            expected: format!("vocabulary size {}", vocab.len()),
            got: m.to_string(),
        });
    }
    let mut out = Vec::with_capacity(logits.dim().0);
    let mut column = vec![0f32; m];
    for sample in logits.axis_iter(Axis(0)) {
        let mut ids = Vec::with_capacity(n);
        for j in 0..n {
            for (c, v) in column.iter_mut().zip(sample.column(j)) {
                *c = *v;
            }
            ids.push(match mode {
                DecodeMode::Argmax => argmax(column.iter().copied()),
                DecodeMode::Sample { temperature } => sample_softmax(&column, temperature, rng),
            });
        }
        out.push(vocab.ids_to_selfies(&ids));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::vocab::EOS_ID;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> TokenVocab {
        TokenVocab::build(["[C][N][O][=C][Ring1]"]).unwrap()
    }

    #[test]
    fn single_atom_layout() {
        let v = TokenVocab::build(["[C]"]).unwrap();
        let b = encode_onehot(&[v.encode("[C]").unwrap()], &v, 3).unwrap();
        assert_eq!(b.data.dim(), (1, 3, 3));
        assert_eq!(b.data[[0, 2, 0]], 1.0);
        assert_eq!(b.data[[0, EOS_ID, 1]], 1.0);
        assert_eq!(b.data[[0, PAD_ID, 2]], 1.0);
        assert_eq!(b.data.sum(), 3.0);
    }

    #[test]
    fn too_long_names_sample() {
        let v = vocab();
        let mols = [v.encode("[C]").unwrap(), v.encode("[C][C][C]").unwrap()];
        match encode_onehot(&mols, &v, 3) {
            Err(Error::TooLong { index, len, .. }) => assert_eq!((index, len), (1, 3)),
            other => panic!("{other:?}"),
        }
        assert!(encode_onehot(&mols, &v, 4).is_ok());
    }

    #[test]
    fn onehot_logits_decode_to_source() {
        let v = vocab();
        let src = ["[C][=C][Ring1][N]", "[O]"];
        let mols: Vec<_> = src.iter().map(|s| v.encode(s).unwrap()).collect();
        let b = encode_onehot(&mols, &v, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = decode_logits(b.data.view(), &v, DecodeMode::Argmax, &mut rng).unwrap();
        assert_eq!(out, src);
    }

    #[test]
    fn zero_logits_pick_lowest_index() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = Array3::zeros((2, v.len(), 5));
        let out = decode_logits(z.view(), &v, DecodeMode::Argmax, &mut rng).unwrap();
        assert_eq!(out, vec![String::new(), String::new()]);
        assert_eq!(argmax([0.0, 0.0, 0.0]), 0);
    }

    #[test]
    fn missing_eos_reads_all_positions() {
        let v = vocab();
        let c = v.index_of("[C]").unwrap();
        let mut l = Array3::zeros((1, v.len(), 4));
        for j in 0..4 {
            l[[0, c, j]] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = decode_logits(l.view(), &v, DecodeMode::Argmax, &mut rng).unwrap();
        assert_eq!(out[0], "[C][C][C][C]");
    }

    #[test]
    fn low_temperature_sampling_matches_argmax() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = Array3::from_shape_fn((4, v.len(), 6), |(i, m, j)| ((i * 7 + m * 3 + j * 5) % 11) as f32 * 0.1);
        let greedy = decode_logits(logits.view(), &v, DecodeMode::Argmax, &mut rng).unwrap();
        for _ in 0..100 {
            let s = decode_logits(logits.view(), &v, DecodeMode::Sample { temperature: 1e-4 }, &mut rng).unwrap();
            assert_eq!(s, greedy);
        }
    }

    #[test]
    fn sampling_requires_positive_temperature() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = Array3::zeros((1, v.len(), 2));
        assert!(decode_logits(z.view(), &v, DecodeMode::Sample { temperature: 0.0 }, &mut rng).is_err());
    }
}
