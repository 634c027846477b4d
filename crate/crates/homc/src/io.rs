//! Self-describing JSON container for tensors and matrices.
//!
//! One format serves both input and output; the `data` array is exactly the
//! in-memory linear layout (first index fastest), so no transposition happens
//! at the boundary. Values round-trip bit-exactly: they are written as the
//! shortest decimal that re-parses to the same double.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HomcError, Result};
use crate::tensor::{CubicalTensor, Matrix, Shape};

pub const FORMAT_VERSION: u32 = 1;
pub const LAYOUT: &str = "linear-first-index-fastest";

/// On-disk form of a cubical tensor (or, with the `rows`/`cols` extension, a
/// general matrix stored column-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorFile {
    pub format_version: u32,
    pub order: usize,
    pub dim: usize,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    pub data: Vec<f64>,
}

impl TensorFile {
    pub fn from_tensor(t: &CubicalTensor) -> Self {
        TensorFile {
            format_version: FORMAT_VERSION,
            order: t.shape().order(),
            dim: t.shape().dim(),
            layout: LAYOUT.to_string(),
            rows: None,
            cols: None,
            data: t.values().to_vec(),
        }
    }

    /// Matrices ship in the same container with order 2; non-square ones
    /// carry explicit row/column counts.
    pub fn from_matrix(m: &Matrix) -> Self {
        let square = m.rows() == m.cols();
        TensorFile {
            format_version: FORMAT_VERSION,
            order: 2,
            dim: m.rows(),
            layout: LAYOUT.to_string(),
            rows: if square { None } else { Some(m.rows()) },
            cols: if square { None } else { Some(m.cols()) },
            data: m.values().to_vec(),
        }
    }

    pub fn validate_header(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(HomcError::Format(format!(
                "unsupported format_version {}, expected {}",
                self.format_version, FORMAT_VERSION
            )));
        }
        if self.layout != LAYOUT {
            return Err(HomcError::Format(format!(
                "unsupported layout {:?}, expected {:?}",
                self.layout, LAYOUT
            )));
        }
        Ok(())
    }

    /// Interprets the payload as a cubical tensor.
    pub fn to_tensor(&self) -> Result<CubicalTensor> {
        self.validate_header()?;
        if self.rows.is_some() || self.cols.is_some() {
            return Err(HomcError::Format(
                "file carries a non-square matrix, not a cubical tensor".into(),
            ));
        }
        let shape = Shape::new(self.order, self.dim)
            .map_err(|e| HomcError::Format(format!("bad shape: {e}")))?;
        if self.data.len() != shape.element_count() {
            return Err(HomcError::Format(format!(
                "data length {} does not match {}^{} = {}",
                self.data.len(),
                self.dim,
                self.order,
                shape.element_count()
            )));
        }
        CubicalTensor::new(shape, self.data.clone())
            .map_err(|e| HomcError::Format(format!("bad tensor data: {e}")))
    }
}

/// Reads and parses a tensor file. Missing or unreadable files surface as
/// I/O errors; anything wrong with the contents is a format error.
pub fn read_tensor_file(path: &Path) -> Result<CubicalTensor> {
    let bytes = std::fs::read(path)?;
    parse_tensor_bytes(&bytes)
}

pub fn parse_tensor_bytes(bytes: &[u8]) -> Result<CubicalTensor> {
    let file: TensorFile =
        serde_json::from_slice(bytes).map_err(|e| HomcError::Format(e.to_string()))?;
    file.to_tensor()
}

pub fn write_tensor_file(path: &Path, tensor: &CubicalTensor) -> Result<()> {
    let file = TensorFile::from_tensor(tensor);
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| {
        HomcError::Format(format!("serialization failed: {e}"))
    })?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
