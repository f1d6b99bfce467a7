//! Checkpoint layout: `model.json` (architecture, seed, tensor index) plus one
//! little-endian `f64` blob per named tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchConfig, ModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Manifest {
    arch: ArchConfig,
    seed: u64,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

pub fn save_checkpoint(params: &ModelParams, seed: u64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (name, t) in params.tensors() {
        let file = format!("{name}.bin");
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(Entry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            file,
        });
    }
    let manifest = Manifest {
        arch: params.arch().clone(),
        seed,
        tensors: entries,
    };
    let path = dir.join("model.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

/// Returns the parameters and the seed they were initialised from.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelParams, u64)> {
    let path = dir.join("model.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::InvalidInput(format!("{}: truncated blob", path.display())));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push((entry.name, Tensor::new(&entry.shape, values, true)?));
    }
    Ok((ModelParams::from_parts(manifest.arch, tensors)?, manifest.seed))
}
