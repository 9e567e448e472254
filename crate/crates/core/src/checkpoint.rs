//! Self-describing binary container for model parameters.
//!
//! Layout: the 8-byte magic `MATVAECK`, a little-endian `u64` header length,
//! a JSON header (kind, config, metadata, tensor names and shapes), then every
//! tensor as raw little-endian `f32` in header order.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Parameterized, Real};

const MAGIC: &[u8; 8] = b"MATVAECK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    meta: serde_json::Value,
    tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Array2<f32>)>,
}

impl Checkpoint {
    pub fn from_model<T: Real, M: Parameterized<T>>(
        kind: &str,
        config: serde_json::Value,
        meta: serde_json::Value,
        model: &M,
    ) -> Self {
        let tensors = model
            .params()
            .into_iter()
            .map(|(name, p)| (name, p.value.mapv(|v| v.f64() as f32)))
            .collect();
        Self {
            kind: kind.to_string(),
            config,
            meta,
            tensors,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| TensorInfo {
                    name: n.clone(),
                    shape: [t.nrows(), t.ncols()],
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out =
            Vec::with_capacity(16 + header.len() + self.tensors.iter().map(|(_, t)| 4 * t.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing MATVAECK magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let mut pos = 16 + hlen;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for info in header.tensors {
            let n = info.shape[0] * info.shape[1];
            let raw = bytes
                .get(pos..pos + 4 * n)
                .ok_or_else(|| bad(&format!("truncated tensor {}", info.name)))?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((
                info.name,
                Array2::from_shape_vec((info.shape[0], info.shape[1]), data).map_err(|e| bad(&e.to_string()))?,
            ));
            pos += 4 * n;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after tensors"));
        }
        Ok(Self {
            kind: header.kind,
            config: header.config,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok((Self::from_bytes(&bytes)?, sha256_hex(&bytes)))
    }

    /// Copies tensors into `model`, checking names and shapes.
    pub fn load_into<T: Real, M: Parameterized<T>>(&self, model: &mut M) -> Result<()> {
        let params = model.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                params.len(),
                self.tensors.len()
            )));
        }
        for ((name, p), (tname, t)) in params.into_iter().zip(&self.tensors) {
            if &name != tname || p.value.dim() != t.dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor {tname} {:?} does not match parameter {name} {:?}",
                    t.dim(),
                    p.value.dim()
                )));
            }
            p.value = t.mapv(|v| T::of(v as f64));
            p.zero_grad();
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of a model's parameter values (names, shapes and raw bits).
pub fn param_hash<T: Real, M: Parameterized<T>>(model: &M) -> String {
    let mut h = Sha256::new();
    for (name, p) in model.params() {
        h.update(name.as_bytes());
        h.update((p.value.nrows() as u64).to_le_bytes());
        h.update((p.value.ncols() as u64).to_le_bytes());
        for v in p.value.iter() {
            h.update(v.f64().to_le_bytes());
        }
    }
    format!("{:x}", h.finalize())
}

/// Hash of a file's contents.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
