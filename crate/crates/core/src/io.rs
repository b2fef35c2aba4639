//! Small binary/file helpers shared by the dataset and checkpoint formats.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Write to a sibling temp file and rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_f32le(path: &Path, values: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

/// Read exactly `count` little-endian `f32` values.
pub fn read_f32le(path: &Path, count: usize) -> Result<Vec<f32>> {
    let bytes = read_exact_size(path, count * 4)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Read a file whose length must be exactly `len` bytes.
pub fn read_exact_size(path: &Path, len: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != len {
        return Err(Error::load(
            path,
            "size",
            format!("size mismatch: expected {len} bytes, found {}", bytes.len()),
        ));
    }
    Ok(bytes)
}
