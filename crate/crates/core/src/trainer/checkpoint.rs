use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Architecture, Model, ModelConfig, ParamStore};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"RNNTCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Where a checkpoint came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingProvenance {
    /// Curriculum stage 1-3, or `None` for the vanilla baseline / fresh init.
    pub stage: Option<u8>,
    pub step: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub provenance: TrainingProvenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    provenance: TrainingProvenance,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    /// Layout: magic, `u32` version, `u64` manifest length, JSON manifest,
    /// then every tensor as contiguous little-endian `f64`, all in manifest
    /// order. Offsets count values from the start of the payload.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::new();
        let mut offset = 0u64;
        for (name, t) in self.model.params.iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
                len: t.numel() as u64,
            });
            offset += t.numel() as u64;
        }
        let manifest = serde_json::to_vec(&Manifest {
            format_version: FORMAT_VERSION,
            config: self.model.config.clone(),
            provenance: self.provenance.clone(),
            tensors,
        })?;
        let mut out = Vec::with_capacity(20 + manifest.len() + 8 * offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (_, t) in self.model.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |what: &str| Error::Checkpoint(format!("corrupt checkpoint: {what}"));
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + mlen).ok_or_else(|| corrupt("truncated manifest"))?;
        let manifest: Manifest =
            serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("corrupt checkpoint manifest: {e}")))?;
        if manifest.format_version != version {
            return Err(corrupt("manifest version differs from header"));
        }
        let payload = &bytes[20 + mlen..];
        let total: u64 = manifest.tensors.iter().map(|t| t.len).sum();
        if payload.len() as u64 != total * 8 {
            return Err(corrupt("payload length does not match manifest"));
        }
        let mut entries = Vec::with_capacity(manifest.tensors.len());
        for t in &manifest.tensors {
            let (start, end) = (t.offset as usize * 8, (t.offset + t.len) as usize * 8);
            let raw = payload.get(start..end).ok_or_else(|| corrupt("tensor outside payload"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            entries.push((t.name.clone(), Tensor::new(t.shape.clone(), data)?));
        }
        let params = ParamStore::new(entries)?;
        let model = Model::from_params(manifest.config, params)?;
        Ok(Self {
            model,
            provenance: manifest.provenance,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// Loads a checkpoint and checks that it holds the expected architecture.
pub fn load_checkpoint_as(path: &Path, architecture: Architecture) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.architecture() != architecture {
        return Err(Error::Config(format!(
            "{} holds a {} model, expected {}",
            path.display(),
            ckpt.model.architecture().name(),
            architecture.name()
        )));
    }
    Ok(ckpt)
}
