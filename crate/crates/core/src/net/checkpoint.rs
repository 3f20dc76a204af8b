//! Checkpoint directory layout:
//!
//! ```text
//! ckpt/
//!   spec.json        ModelSpec
//!   manifest.json    [{name, file, shape, dtype, byte_offset, byte_len}]
//!   l01.weight.bin   little-endian f32
//!   ...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::spec::ModelSpec;
use crate::error::{Error, Result};

pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Offset of the tensor inside `file`; every tensor has its own file, so
    /// this is always 0.
    pub byte_offset: u64,
    pub byte_len: u64,
}

fn ckpt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes `model` to the directory `dir`, creating it if needed.
pub fn save_checkpoint(model: &Model, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("spec.json"), serde_json::to_vec_pretty(&model.spec)?)?;
    let mut entries = Vec::new();
    for (name, shape, values) in model.named_tensors() {
        let file = format!("{name}.bin");
        let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        fs::write(dir.join(&file), &bytes)?;
        entries.push(TensorEntry {
            name,
            file,
            shape,
            dtype: DTYPE.into(),
            byte_offset: 0,
            byte_len: bytes.len() as u64,
        });
    }
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&entries)?)?;
    Ok(dir.to_path_buf())
}

/// Loads a checkpoint written by [`save_checkpoint`]. Values are widened
/// from f32 back to f64.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Model> {
    let dir = dir.as_ref();
    let spec: ModelSpec = serde_json::from_slice(&fs::read(dir.join("spec.json"))?)?;
    let entries: Vec<TensorEntry> = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    // Seed is irrelevant: every tensor is overwritten below.
    let mut model = Model::build(spec, 0)?;
    let mut seen = 0;
    for (name, slot) in model.named_tensors_mut() {
        let entry = entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| ckpt_err(dir, format!("missing tensor {name}")))?;
        if entry.dtype != DTYPE {
            return Err(ckpt_err(dir, format!("{name}: unsupported dtype {}", entry.dtype)));
        }
        let numel: usize = entry.shape.iter().product();
        if numel != slot.len() || entry.byte_len != 4 * numel as u64 {
            return Err(ckpt_err(
                dir,
                format!("{name}: shape {:?} does not match the spec ({} values)", entry.shape, slot.len()),
            ));
        }
        let bytes = fs::read(dir.join(&entry.file))?;
        let start = entry.byte_offset as usize;
        let chunk = bytes
            .get(start..start + entry.byte_len as usize)
            .ok_or_else(|| ckpt_err(dir, format!("{name}: file {} is truncated", entry.file)))?;
        for (v, b) in slot.iter_mut().zip(chunk.chunks_exact(4)) {
            *v = f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        seen += 1;
    }
    if seen != entries.len() {
        return Err(ckpt_err(dir, "manifest lists tensors the spec does not define"));
    }
    Ok(model)
}
