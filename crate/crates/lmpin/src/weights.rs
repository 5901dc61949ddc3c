//! Weight archive: `LMPINW01` magic, little-endian `u32` manifest length,
//! UTF-8 JSON manifest `[{name, shape, offset}]`, then the little-endian
//! `f32` payload. Offsets are in bytes from the start of the payload.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::NetworkConfig;
use crate::error::{LmpinError, Result};
use crate::tensor::{Conv, Tensor};

pub const MAGIC: &[u8; 8] = b"LMPINW01";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dtype: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    tensors: BTreeMap<String, Tensor>,
    manifest_hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl NetworkWeights {
    pub fn from_tensors(tensors: BTreeMap<String, Tensor>) -> Self {
        let manifest = build_manifest(&tensors);
        Self {
            tensors,
            manifest_hash: sha256_hex(&manifest),
        }
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    /// SHA-256 of the serialized manifest, lowercase hex.
    pub fn manifest_hash(&self) -> &str {
        &self.manifest_hash
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| LmpinError::MissingTensor(name.to_string()))
    }

    /// Checks every tensor the config needs is present with the right shape.
    pub fn validate(&self, config: &NetworkConfig) -> Result<()> {
        config.validate()?;
        for (name, shape) in config.expected_tensors() {
            let t = self.get(&name)?;
            if t.shape != shape {
                return Err(LmpinError::ShapeMismatch {
                    name,
                    expected: shape,
                    found: t.shape.clone(),
                });
            }
        }
        Ok(())
    }

    /// Borrows layer `name` as a convolution with the given stride.
    pub fn conv(&self, name: &str, stride: usize) -> Result<Conv<'_>> {
        let w = self.get(&format!("{name}.weight"))?;
        let b = self.get(&format!("{name}.bias"))?;
        if w.shape.len() != 4 || w.shape[0] != w.shape[1] || b.shape != [w.shape[3]] {
            return Err(LmpinError::ShapeMismatch {
                name: name.to_string(),
                expected: vec![w.shape.first().copied().unwrap_or(0); 2],
                found: w.shape.clone(),
            });
        }
        Ok(Conv {
            weight: &w.data,
            bias: &b.data,
            kernel: w.shape[0],
            c_in: w.shape[2],
            c_out: w.shape[3],
            stride,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = build_manifest(&self.tensors);
        let payload: usize = self.tensors.values().map(|t| t.len() * 4).sum();
        let mut out = Vec::with_capacity(12 + manifest.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses an archive without checking it against a config.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: String| LmpinError::CorruptManifest(m);
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let manifest = bytes
            .get(12..12 + len)
            .ok_or_else(|| corrupt(format!("manifest length {len} exceeds file")))?;
        let entries: Vec<ManifestEntry> =
            serde_json::from_slice(manifest).map_err(|e| corrupt(e.to_string()))?;
        let payload = &bytes[12 + len..];
        let mut tensors = BTreeMap::new();
        for e in entries {
            if let Some(dt) = &e.dtype {
                if dt != "float32" && dt != "f32" {
                    return Err(corrupt(format!("`{}` has unsupported dtype {dt}", e.name)));
                }
            }
            let count = e
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| corrupt(format!("`{}` shape overflows", e.name)))?;
            let start = e.offset as usize;
            let end = start
                .checked_add(count * 4)
                .filter(|&end| end <= payload.len() && start % 4 == 0)
                .ok_or_else(|| {
                    corrupt(format!(
                        "`{}` with shape {:?} at offset {} does not fit a {}-byte payload",
                        e.name,
                        e.shape,
                        e.offset,
                        payload.len()
                    ))
                })?;
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<_>>();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(corrupt(format!("`{}` holds non-finite values", e.name)));
            }
            if tensors
                .insert(
                    e.name.clone(),
                    Tensor {
                        shape: e.shape,
                        data,
                    },
                )
                .is_some()
            {
                return Err(corrupt(format!("duplicate tensor `{}`", e.name)));
            }
        }
        Ok(Self {
            tensors,
            manifest_hash: sha256_hex(manifest),
        })
    }
}

fn build_manifest(tensors: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut offset = 0u64;
    let entries: Vec<ManifestEntry> = tensors
        .iter()
        .map(|(name, t)| {
            let e = ManifestEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                offset,
                dtype: None,
            };
            offset += t.len() as u64 * 4;
            e
        })
        .collect();
    serde_json::to_vec(&entries).expect("manifest serializes")
}

/// Parses an archive and checks it against `config`.
pub fn load_weights(bytes: &[u8], config: &NetworkConfig) -> Result<NetworkWeights> {
    let w = NetworkWeights::from_bytes(bytes)?;
    w.validate(config)?;
    Ok(w)
}

/// Seeded weights: uniform in `±sqrt(3 / fan_in)`, zero biases.
pub fn init_weights(config: &NetworkConfig, seed: u64) -> Result<NetworkWeights> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = config
        .expected_tensors()
        .into_iter()
        .map(|(name, shape)| {
            let t = if shape.len() == 4 {
                let fan_in = (shape[0] * shape[1] * shape[2]) as f32;
                let bound = (3.0 / fan_in).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                Tensor { shape, data }
            } else {
                Tensor::zeros(shape)
            };
            (name, t)
        })
        .collect();
    Ok(NetworkWeights::from_tensors(tensors))
}

/// All-zero weights and biases.
pub fn zero_weights(config: &NetworkConfig) -> Result<NetworkWeights> {
    config.validate()?;
    let tensors = config
        .expected_tensors()
        .into_iter()
        .map(|(name, shape)| (name, Tensor::zeros(shape)))
        .collect();
    Ok(NetworkWeights::from_tensors(tensors))
}
