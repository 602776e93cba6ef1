//! File formats: binary embedding matrices, id lists, and label tables.
//!
//! The embedding container is deliberately minimal. Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PGMV"
//! 4       4     format version, u32, currently 1
//! 8       8     row count, u64
//! 16      8     dimension, u64
//! 24      M*D*4 row-major f32 payload
//! ```
//!
//! Values on disk are 32-bit; the in-memory matrix is 64-bit. Widening on
//! read is exact, so write-then-read returns bit-identical f32 payloads.

use crate::embedding::{EmbeddingError, EmbeddingMatrix, PseudoLabels, UtteranceSet};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"PGMV";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: not an embedding file (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: unsupported format version {found} (expected {VERSION})")]
    BadVersion { path: String, found: u32 },
    #[error("{path}: header promises {expected} payload bytes, file has {found}")]
    Truncated {
        path: String,
        expected: u64,
        found: u64,
    },
    #[error("{path}: {source}")]
    BadContent {
        path: String,
        source: EmbeddingError,
    },
    #[error("{path} line {line}: {reason}")]
    BadRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: expected {expected} ids, found {found}")]
    CountMismatch {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{path} line {line}: duplicate id {id:?}")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        source,
    }
}

/// Reads one embedding matrix; `model_id` tags which model slot it fills.
pub fn read_embeddings(path: &Path, model_id: usize) -> Result<EmbeddingMatrix, IoError> {
    let mut file = std::fs::File::open(path).map_err(|e| file_err(path, e))?;
    let mut header = [0u8; 24];
    file.read_exact(&mut header).map_err(|e| file_err(path, e))?;
    if &header[0..4] != MAGIC {
        return Err(IoError::BadMagic {
            path: path.display().to_string(),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(IoError::BadVersion {
            path: path.display().to_string(),
            found: version,
        });
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let dim = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| IoError::Truncated {
            path: path.display().to_string(),
            expected: u64::MAX,
            found: 0,
        })?;
    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(|e| file_err(path, e))?;
    if payload.len() as u64 != expected {
        return Err(IoError::Truncated {
            path: path.display().to_string(),
            expected,
            found: payload.len() as u64,
        });
    }
    let mut data = Vec::with_capacity((rows * dim) as usize);
    for chunk in payload.chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    EmbeddingMatrix::new(model_id, dim as usize, data).map_err(|source| IoError::BadContent {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a matrix in the container format. In-memory f64 values are rounded
/// to the nearest f32 on the way out.
pub fn write_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<(), IoError> {
    let mut buf = Vec::with_capacity(24 + m.data().len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.dim() as u64).to_le_bytes());
    for &v in m.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path).map_err(|e| file_err(path, e))?;
    file.write_all(&buf).map_err(|e| file_err(path, e))?;
    Ok(())
}

/// Reads an id list: UTF-8, one identifier per line, exactly `expected` of
/// them. A trailing newline is allowed; interior blank lines are not.
pub fn read_ids(path: &Path, expected: usize) -> Result<UtteranceSet, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut ids = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    for (i, line) in lines.iter().enumerate() {
        let id = line.trim_end_matches('\r');
        if id.is_empty() {
            return Err(IoError::BadRecord {
                path: path.display().to_string(),
                line: i + 1,
                reason: "blank id".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(IoError::DuplicateId {
                path: path.display().to_string(),
                line: i + 1,
                id: id.to_string(),
            });
        }
        ids.push(id.to_string());
    }
    if ids.len() != expected {
        return Err(IoError::CountMismatch {
            path: path.display().to_string(),
            expected,
            found: ids.len(),
        });
    }
    UtteranceSet::new(ids).map_err(|source| IoError::BadContent {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_ids(path: &Path, set: &UtteranceSet) -> Result<(), IoError> {
    let mut out = String::new();
    for id in set.ids() {
        out.push_str(id);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| file_err(path, e))
}

/// Writes `<id>\t<label>` rows in matrix row order, one per utterance,
/// including the `-1` rows for unplaced utterances.
pub fn write_labels(path: &Path, set: &UtteranceSet, labels: &PseudoLabels) -> Result<(), IoError> {
    assert_eq!(set.len(), labels.len(), "id/label length mismatch");
    let mut out = String::new();
    for (i, id) in set.ids().iter().enumerate() {
        out.push_str(id);
        out.push('\t');
        out.push_str(&labels.label(i).to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| file_err(path, e))
}

/// Reads a label table back as `(id, label)` pairs in file order.
pub fn read_labels(path: &Path) -> Result<Vec<(String, i64)>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.is_empty() {
            continue;
        }
        let bad = |reason: &str| IoError::BadRecord {
            path: path.display().to_string(),
            line: i + 1,
            reason: reason.to_string(),
        };
        let Some((id, label)) = raw.split_once('\t') else {
            return Err(bad("expected `<id>\\t<label>`"));
        };
        if id.is_empty() {
            return Err(bad("blank id"));
        }
        let label: i64 = label
            .trim_end_matches('\r')
            .parse()
            .map_err(|_| bad("label is not an integer"))?;
        if label < -1 {
            return Err(bad("label below -1"));
        }
        out.push((id.to_string(), label));
    }
    Ok(out)
}
