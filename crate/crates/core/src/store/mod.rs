//! Precomputed representation stores and the item catalog.
//!
//! A corpus on disk is a manifest plus six NPY files (global and local
//! representations for each side, and a prefix-sum offsets file per local
//! store) and a JSON-lines catalog. Everything is loaded once, validated, and
//! then shared read-only, so retrieval never re-encodes corpus items.

mod catalog;
mod corpus;
mod local;
mod manifest;
mod matrix;

use std::path::PathBuf;

use thiserror::Error;

use crate::npy::NpyError;

pub use catalog::{Catalog, CatalogEntry};
pub use corpus::{file_ref, Corpus, CorpusSide, Side, MANIFEST_FILE};
pub use local::{Block, LocalEmbeddingSet};
pub use manifest::{load_manifest, FileRef, StoreFiles, StoreManifest};
pub use matrix::EmbeddingMatrix;

/// Row norms must land within this distance of 1.0 for a store to count as
/// normalized.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Npy {
        path: PathBuf,
        #[source]
        source: NpyError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: file not found")]
    MissingFile { path: PathBuf },
    #[error("{path}: checksum mismatch (manifest {expected}, file {found})")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: dimension mismatch (expected {expected}, found {found})")]
    DimMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: item count mismatch (expected {expected}, found {found})")]
    CountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: expected a rank-{expected} array, found shape {shape:?}")]
    Rank {
        path: PathBuf,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("invalid offsets: {0}")]
    Offsets(String),
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("dimension must be positive")]
    ZeroDim,
    #[error("{len} values do not form rows of dimension {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("row {row} has norm {norm}, which is not unit length")]
    NotNormalized { row: usize, norm: f64 },
    #[error("item id {id} out of range for {count} items")]
    OutOfRange { id: usize, count: usize },
    #[error("{path}:{line}: {reason}")]
    Catalog {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("inconsistent corpus: {0}")]
    Inconsistent(String),
}

impl StoreError {
    pub(crate) fn npy(path: impl Into<PathBuf>, source: NpyError) -> Self {
        let path = path.into();
        match source {
            NpyError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => {
                StoreError::MissingFile { path }
            }
            source => StoreError::Npy { path, source },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            StoreError::MissingFile { path }
        } else {
            StoreError::Io { path, source }
        }
    }
}

pub(crate) fn check_finite(values: &[f32]) -> Result<(), StoreError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(StoreError::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

/// Scales `row` to unit length in place; returns false for an all-zero row.
pub(crate) fn normalize_in_place(row: &mut [f32]) -> bool {
    let norm = l2_norm(row);
    if norm == 0.0 {
        return false;
    }
    for v in row.iter_mut() {
        *v = (f64::from(*v) / norm) as f32;
    }
    true
}
