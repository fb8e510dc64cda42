use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, TrainConfig};
use crate::compute::{ParamSet, Rng, Tensor};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const PAYLOAD: &str = "tensors.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPhase {
    Pretrained,
    Finetuned,
}

impl CheckpointPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckpointPhase::Pretrained => "pretrained",
            CheckpointPhase::Finetuned => "finetuned",
        }
    }
}

/// A trained model with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub phase: CheckpointPhase,
    pub config: TrainConfig,
    pub model: Model<f32>,
    /// Epoch whose parameters were kept (0 = initialization).
    pub epoch: usize,
}

impl Checkpoint {
    /// Errors naming the first architecture field that differs from `cfg`.
    pub fn check_compatible(&self, cfg: &TrainConfig, n_items: usize) -> Result<()> {
        let mine = &self.model.config.backbone;
        let mismatch = |field: &'static str, a: String, b: String| Error::ConfigMismatch {
            field,
            checkpoint: a,
            config: b,
        };
        if mine.dim != cfg.dim {
            return Err(mismatch("dim", mine.dim.to_string(), cfg.dim.to_string()));
        }
        if mine.max_len != cfg.max_len {
            return Err(mismatch("max_len", mine.max_len.to_string(), cfg.max_len.to_string()));
        }
        if mine.kind != cfg.backbone {
            return Err(mismatch("backbone", mine.kind.to_string(), cfg.backbone.to_string()));
        }
        if mine.n_items != n_items {
            return Err(mismatch("n_items", mine.n_items.to_string(), n_items.to_string()));
        }
        if mine.blocks != cfg.blocks {
            return Err(mismatch("blocks", mine.blocks.to_string(), cfg.blocks.to_string()));
        }
        if mine.heads != cfg.heads {
            return Err(mismatch("heads", mine.heads.to_string(), cfg.heads.to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    /// Byte offset into the payload.
    offset: usize,
    /// Byte length.
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    phase: CheckpointPhase,
    epoch: usize,
    config: TrainConfig,
    model: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Writes `manifest.json` and `tensors.bin` (little-endian f32, row-major,
/// in manifest order) into the directory `path`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let dir = path.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut payload = Vec::with_capacity(ckpt.model.params.numel() * 4);
    let mut tensors = Vec::with_capacity(ckpt.model.params.len());
    for (name, t) in ckpt.model.params.iter() {
        let offset = payload.len();
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            offset,
            length: payload.len() - offset,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        phase: ckpt.phase,
        epoch: ckpt.epoch,
        config: ckpt.config.clone(),
        model: ckpt.model.config.clone(),
        tensors,
    };
    let mpath = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&mpath, e))?;
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join(PAYLOAD);
    fs::write(&ppath, payload).map_err(|e| Error::io(&ppath, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = path.as_ref();
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(&mpath, e))?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| Error::json(&mpath, e))?;
    let ppath = dir.join(PAYLOAD);
    let payload = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;

    let mut params = ParamSet::new();
    let mut covered = 0;
    for entry in &manifest.tensors {
        if entry.dtype != "f32" {
            return Err(Error::Invalid(format!(
                "tensor `{}` has unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let n: usize = entry.shape.iter().product();
        if entry.length != n * 4 {
            return Err(Error::Invalid(format!(
                "tensor `{}` length disagrees with its shape",
                entry.name
            )));
        }
        let end = entry.offset + entry.length;
        if end > payload.len() {
            return Err(Error::TruncatedPayload {
                name: entry.name.clone(),
                start: entry.offset,
                end,
                len: payload.len(),
            });
        }
        let data = payload[entry.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
        covered = covered.max(end);
    }
    if covered != payload.len() {
        return Err(Error::MissingTensor(format!(
            "<payload holds {} bytes past the last indexed tensor>",
            payload.len() - covered
        )));
    }
    // Every tensor the architecture needs must be present with its shape.
    let expected = Model::<f32>::init(manifest.model.clone(), &mut Rng::new(0))?;
    for (name, t) in expected.params.iter() {
        let got = params.get(name)?;
        if got.shape() != t.shape() {
            return Err(Error::Invalid(format!(
                "tensor `{name}` has shape {:?}, expected {:?}",
                got.shape(),
                t.shape()
            )));
        }
    }
    Ok(Checkpoint {
        phase: manifest.phase,
        config: manifest.config,
        model: Model {
            config: manifest.model,
            params,
        },
        epoch: manifest.epoch,
    })
}
