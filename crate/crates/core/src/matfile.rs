//! Row-major 32-bit float matrix files with a JSON metadata sidecar.
//!
//! The data file holds `rows * cols` little-endian f32 values. The
//! sidecar (`<file>.meta.json`) records the dimensions, ids, optional
//! labels, and an FNV-1a checksum of the raw bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finding::FindingLabel;
use crate::util::{bytes_to_f32s, f32s_to_bytes, fnv1a64_hex};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub rows: usize,
    pub cols: usize,
    pub row_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<FindingLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
    pub checksum: String,
}

pub fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut name = data_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".meta.json");
    data_path.with_file_name(name)
}

/// Write the matrix and its sidecar; the checksum is filled in here.
pub fn write_f32_matrix(
    path: &Path,
    data: &[f32],
    mut sidecar: MatrixSidecar,
) -> Result<MatrixSidecar> {
    if data.len() != sidecar.rows * sidecar.cols {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} = {} values", sidecar.rows, sidecar.cols, sidecar.rows * sidecar.cols),
            got: format!("{} values", data.len()),
        });
    }
    if sidecar.row_ids.len() != sidecar.rows {
        return Err(Error::ShapeMismatch {
            expected: format!("{} row ids", sidecar.rows),
            got: format!("{} row ids", sidecar.row_ids.len()),
        });
    }
    let bytes = f32s_to_bytes(data);
    sidecar.checksum = fnv1a64_hex(&bytes);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let meta = sidecar_path(path);
    fs::write(
        &meta,
        serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&meta, e))?,
    )
    .map_err(|e| Error::io(&meta, e))?;
    Ok(sidecar)
}

/// Read a matrix back, verifying the checksum and dimensions.
pub fn read_f32_matrix(path: &Path) -> Result<(Vec<f32>, MatrixSidecar)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta_path = sidecar_path(path);
    let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let sidecar: MatrixSidecar =
        serde_json::from_str(&raw).map_err(|e| Error::json(&meta_path, e))?;
    if fnv1a64_hex(&bytes) != sidecar.checksum {
        return Err(Error::ContractViolation(format!(
            "checksum mismatch for {}",
            path.display()
        )));
    }
    let data = bytes_to_f32s(&bytes)
        .ok_or_else(|| Error::ContractViolation("file is not a multiple of 4 bytes".into()))?;
    if data.len() != sidecar.rows * sidecar.cols {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", sidecar.rows, sidecar.cols),
            got: format!("{} values", data.len()),
        });
    }
    Ok((data, sidecar))
}
