//! Checkpoint directory layout:
//!
//! ```text
//! <dir>/meta.json       architecture, run config, step, seed, tensor table
//! <dir>/weights.bin     parameters and buffers, f64 little-endian, visit order
//! <dir>/optimizer.bin   momentum buffers (optional), same encoding
//! ```

use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use star_nn::{Float, Parameters, Slot};

use super::changestar::{Architecture, ChangeStar};
use crate::error::{Result, StarError};

pub const CHECKPOINT_FORMAT: &str = "changestar-checkpoint/v1";
const META_FILE: &str = "meta.json";
const WEIGHTS_FILE: &str = "weights.bin";
const OPTIMIZER_FILE: &str = "optimizer.bin";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub architecture: Architecture,
    /// The run configuration the weights were produced with.
    pub config: serde_json::Value,
    pub step: usize,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
    /// Shapes of the optimizer buffers, empty when none were saved.
    #[serde(default)]
    pub optimizer: Vec<Vec<usize>>,
}

fn encode<'a, T: Float>(out: &mut Vec<u8>, values: impl Iterator<Item = &'a T>) {
    for v in values {
        out.extend_from_slice(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes());
    }
}

fn decode<T: Float>(bytes: &[u8], shape: &[usize], cursor: &mut usize, what: &str) -> Result<ArrayD<T>> {
    let count: usize = shape.iter().product();
    let end = *cursor + count * 8;
    if end > bytes.len() {
        return Err(StarError::Checkpoint(format!("{what} is truncated")));
    }
    let values = bytes[*cursor..end]
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect();
    *cursor = end;
    ArrayD::from_shape_vec(IxDyn(shape), values).map_err(|e| StarError::Checkpoint(e.to_string()))
}

fn tensor_table<T: Float>(model: &mut ChangeStar<T>) -> Vec<TensorEntry> {
    let mut tensors = Vec::new();
    model.visit("", &mut |name, slot| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: slot.value().shape().to_vec(),
            trainable: matches!(slot, Slot::Param(_)),
        })
    });
    tensors
}

pub fn save_checkpoint<T: Float>(
    dir: &Path,
    model: &mut ChangeStar<T>,
    config: serde_json::Value,
    step: usize,
    seed: u64,
    optimizer: Option<&[ArrayD<T>]>,
) -> Result<CheckpointMeta> {
    fs::create_dir_all(dir).map_err(|e| StarError::io(dir, e))?;
    let mut weights = Vec::new();
    model.visit("", &mut |_, slot| encode(&mut weights, slot.value().iter()));
    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.to_string(),
        architecture: model.architecture().clone(),
        config,
        step,
        seed,
        tensors: tensor_table(model),
        optimizer: optimizer
            .map(|b| b.iter().map(|a| a.shape().to_vec()).collect())
            .unwrap_or_default(),
    };
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| StarError::io(path, e))
    };
    write(WEIGHTS_FILE, &weights)?;
    match optimizer {
        Some(buffers) => {
            let mut bytes = Vec::new();
            for b in buffers {
                encode(&mut bytes, b.iter());
            }
            write(OPTIMIZER_FILE, &bytes)?;
        }
        None => {
            let path = dir.join(OPTIMIZER_FILE);
            if path.exists() {
                fs::remove_file(&path).map_err(|e| StarError::io(path, e))?;
            }
        }
    }
    write(META_FILE, &serde_json::to_vec_pretty(&meta)?)?;
    Ok(meta)
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| StarError::io(&path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| StarError::Checkpoint(format!("{}: {e}", path.display())))?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(StarError::Checkpoint(format!("unsupported checkpoint format `{}`", meta.format)));
    }
    Ok(meta)
}

/// Loads weights into `model`, which must have the checkpoint's architecture.
/// Returns the metadata and the optimizer buffers, if any were saved.
pub fn load_checkpoint<T: Float>(
    dir: &Path,
    model: &mut ChangeStar<T>,
) -> Result<(CheckpointMeta, Option<Vec<ArrayD<T>>>)> {
    let meta = read_meta(dir)?;
    if &meta.architecture != model.architecture() {
        return Err(StarError::Checkpoint(format!(
            "architecture mismatch: checkpoint has {}, model has {}",
            serde_json::to_string(&meta.architecture)?,
            serde_json::to_string(model.architecture())?
        )));
    }
    if meta.tensors != tensor_table(model) {
        return Err(StarError::Checkpoint("tensor layout does not match the model".into()));
    }
    let path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(|e| StarError::io(&path, e))?;
    let mut cursor = 0;
    let mut loaded = Vec::with_capacity(meta.tensors.len());
    for t in &meta.tensors {
        loaded.push(decode::<T>(&bytes, &t.shape, &mut cursor, WEIGHTS_FILE)?);
    }
    if cursor != bytes.len() {
        return Err(StarError::Checkpoint(format!("{WEIGHTS_FILE} has trailing bytes")));
    }
    let mut it = loaded.into_iter();
    model.visit("", &mut |_, mut slot| {
        *slot.value_mut() = it.next().expect("table checked above");
    });

    let optimizer = if meta.optimizer.is_empty() {
        None
    } else {
        let path = dir.join(OPTIMIZER_FILE);
        let bytes = fs::read(&path).map_err(|e| StarError::io(&path, e))?;
        let mut cursor = 0;
        let buffers = meta
            .optimizer
            .iter()
            .map(|shape| decode::<T>(&bytes, shape, &mut cursor, OPTIMIZER_FILE))
            .collect::<Result<Vec<_>>>()?;
        Some(buffers)
    };
    Ok((meta, optimizer))
}

impl<T: Float> ChangeStar<T> {
    /// Builds a model with the checkpoint's architecture and loads its weights.
    pub fn from_checkpoint(dir: &Path) -> Result<(Self, CheckpointMeta)> {
        let meta = read_meta(dir)?;
        let mut model = ChangeStar::new(meta.architecture.clone(), meta.seed)?;
        let (meta, _) = load_checkpoint(dir, &mut model)?;
        Ok((model, meta))
    }
}
