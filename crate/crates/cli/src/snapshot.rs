//! Self-describing field snapshots: raw little-endian float64 samples in
//! `<name>.bin` plus a `<name>.meta.json` sidecar carrying the dimensions
//! and a checksum. Roundtrips are bit-identical.

use bubble_core::{Grid, Vec3Field};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot io error at {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("snapshot meta is not valid JSON: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("dimension mismatch: meta says n={n}, components={components}, but payload holds {actual} bytes")]
    DimensionMismatch {
        n: usize,
        components: usize,
        actual: usize,
    },
    #[error("unsupported snapshot format: dtype {dtype:?}, layout {layout:?}")]
    UnsupportedFormat { dtype: String, layout: String },
    #[error("checksum mismatch: meta {expected}, payload {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("snapshot grid size {0} is not a supported grid")]
    BadGrid(usize),
}

const DTYPE: &str = "float64-little-endian";
const LAYOUT: &str = "row-major, component-fastest";

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotMeta {
    n: usize,
    components: usize,
    dtype: String,
    layout: String,
    sha256: String,
}

fn meta_path(bin_path: &Path) -> PathBuf {
    bin_path.with_extension("meta.json")
}

fn payload_bytes(field: &Vec3Field) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(field.data().len() * 24);
    for v in field.data() {
        for c in v {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
    }
    bytes
}

pub fn write_snapshot(field: &Vec3Field, bin_path: &Path) -> Result<(), SnapshotError> {
    let bytes = payload_bytes(field);
    let digest = format!("{:x}", Sha256::digest(&bytes));
    std::fs::write(bin_path, &bytes).map_err(|e| SnapshotError::Io(bin_path.to_path_buf(), e))?;
    let meta = SnapshotMeta {
        n: field.n(),
        components: 3,
        dtype: DTYPE.to_string(),
        layout: LAYOUT.to_string(),
        sha256: digest,
    };
    let mp = meta_path(bin_path);
    std::fs::write(&mp, serde_json::to_string_pretty(&meta)?)
        .map_err(|e| SnapshotError::Io(mp, e))?;
    Ok(())
}

pub fn read_snapshot(bin_path: &Path) -> Result<Vec3Field, SnapshotError> {
    let mp = meta_path(bin_path);
    let meta_text =
        std::fs::read_to_string(&mp).map_err(|e| SnapshotError::Io(mp.clone(), e))?;
    let meta: SnapshotMeta = serde_json::from_str(&meta_text)?;
    if meta.dtype != DTYPE || meta.layout != LAYOUT {
        return Err(SnapshotError::UnsupportedFormat {
            dtype: meta.dtype,
            layout: meta.layout,
        });
    }
    let bytes =
        std::fs::read(bin_path).map_err(|e| SnapshotError::Io(bin_path.to_path_buf(), e))?;
    let expected_len = meta.n * meta.n * meta.components * 8;
    if meta.components != 3 || bytes.len() != expected_len {
        return Err(SnapshotError::DimensionMismatch {
            n: meta.n,
            components: meta.components,
            actual: bytes.len(),
        });
    }
    let actual_digest = format!("{:x}", Sha256::digest(&bytes));
    if actual_digest != meta.sha256 {
        return Err(SnapshotError::ChecksumMismatch {
            expected: meta.sha256,
            actual: actual_digest,
        });
    }
    let grid = Grid::new(meta.n).map_err(|_| SnapshotError::BadGrid(meta.n))?;
    let mut field = Vec3Field::zeros(grid);
    for (idx, v) in field.data_mut().iter_mut().enumerate() {
        for (c, comp) in v.iter_mut().enumerate() {
            let off = (idx * 3 + c) * 8;
            *comp = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        }
    }
    Ok(field)
}
