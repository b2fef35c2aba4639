//! Checkpoint directory: `params.json` (manifest) + `params.bin` (raw
//! little-endian `f32`, tensors concatenated in manifest order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::init::param_layout;
use crate::error::{Error, Result};
use crate::io::{read_f32le, write_atomic, write_f32le};
use crate::params::ModelParams;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "params.json";
pub const DATA_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `params.bin`.
    pub offset: usize,
    /// Number of `f32` values.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub dtype: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(dir: &Path, config: &ModelConfig, params: &ModelParams<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(params.len());
    let mut values = Vec::with_capacity(params.scalar_count());
    for (name, t) in params.iter() {
        entries.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset: values.len() * 4,
            count: t.len(),
        });
        values.extend_from_slice(t.data());
    }
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        dtype: "f32le".into(),
        config: config.clone(),
        tensors: entries,
    };
    write_f32le(&dir.join(DATA_FILE), &values)?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_atomic(&dir.join(MANIFEST_FILE), json.as_bytes())
}

pub fn load_checkpoint(dir: &Path) -> Result<(ModelConfig, ModelParams<f32>)> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::load(&mpath, "manifest", e.to_string()))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::load(&mpath, "version", format!("unsupported version {}", manifest.version)));
    }
    if manifest.dtype != "f32le" {
        return Err(Error::load(&mpath, "dtype", format!("unsupported dtype {}", manifest.dtype)));
    }
    manifest
        .config
        .validate()
        .map_err(|e| Error::load(&mpath, "config", e.to_string()))?;

    let expected: usize = manifest.tensors.iter().map(|e| e.count).sum();
    let dpath = dir.join(DATA_FILE);
    let values = read_f32le(&dpath, expected)?;

    let layout = param_layout(&manifest.config);
    if layout.len() != manifest.tensors.len() {
        return Err(Error::load(
            &mpath,
            "tensors",
            format!("{} entries but the config defines {}", manifest.tensors.len(), layout.len()),
        ));
    }
    let mut params = ModelParams::new();
    for (entry, spec) in manifest.tensors.iter().zip(&layout) {
        if entry.name != spec.name || entry.shape != spec.shape {
            return Err(Error::load(
                &mpath,
                format!("tensors.{}", entry.name),
                format!("expected {} {:?}, found {:?}", spec.name, spec.shape, entry.shape),
            ));
        }
        let n: usize = entry.shape.iter().product();
        if n != entry.count || entry.offset % 4 != 0 || entry.offset / 4 + n > values.len() {
            return Err(Error::load(
                &mpath,
                format!("tensors.{}", entry.name),
                "offset/count inconsistent with shape or data size",
            ));
        }
        let start = entry.offset / 4;
        let t = Tensor::new(entry.shape.clone(), values[start..start + n].to_vec())?;
        if !t.all_finite() {
            return Err(Error::load(&dpath, format!("tensors.{}", entry.name), "non-finite value"));
        }
        params.push(entry.name.clone(), t)?;
    }
    Ok((manifest.config, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::tiny();
        let params = init_params::<f32>(&cfg, 9).unwrap();
        save_checkpoint(dir.path(), &cfg, &params).unwrap();
        let (cfg2, params2) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(cfg, cfg2);
        for (a, b) in params.tensors().iter().zip(params2.tensors()) {
            let abits: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bbits: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(abits, bbits);
        }
    }

    #[test]
    fn truncated_data_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::tiny();
        save_checkpoint(dir.path(), &cfg, &init_params(&cfg, 1).unwrap()).unwrap();
        let bin = dir.path().join(DATA_FILE);
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err();
        assert!(err.to_string().contains("size"), "{err}");
    }
}
