use std::path::Path;

use super::{check_finite, l2_norm, normalize_in_place, StoreError, NORM_TOLERANCE};
use crate::npy::{self, NpyError};

/// Row-major `item_count × dim` float32 global representations. Row index is
/// the item id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    values: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, values: Vec<f32>) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        if !values.len().is_multiple_of(dim) {
            return Err(StoreError::Ragged {
                len: values.len(),
                dim,
            });
        }
        check_finite(&values)?;
        Ok(Self {
            dim,
            values,
            normalized: false,
        })
    }

    pub fn empty(dim: usize) -> Result<Self, StoreError> {
        Self::new(dim, Vec::new())
    }

    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Self, StoreError> {
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(StoreError::Ragged { len: r.len(), dim });
            }
            values.extend_from_slice(r);
        }
        Self::new(dim, values)
    }

    /// Loads a 2-D float32 NPY file. When `expected_dim` is given the column
    /// count must equal it.
    pub fn load(path: &Path, expected_dim: Option<usize>) -> Result<Self, StoreError> {
        let (shape, values) = npy::read_f32_file(path).map_err(|e| StoreError::npy(path, e))?;
        let [rows, dim] = shape[..] else {
            return Err(StoreError::npy(path, NpyError::Rank { expected: 2, shape }));
        };
        if let Some(expected) = expected_dim {
            if expected != dim {
                return Err(StoreError::DimMismatch {
                    path: path.into(),
                    expected,
                    found: dim,
                });
            }
        }
        let m = Self::new(dim, values).map_err(|e| match e {
            StoreError::ZeroDim => StoreError::DimMismatch {
                path: path.into(),
                expected: expected_dim.unwrap_or(1),
                found: 0,
            },
            other => other,
        })?;
        debug_assert_eq!(m.item_count(), rows);
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<(), StoreError> {
        npy::write_array_file(path, &[self.item_count(), self.dim], &self.values)
            .map_err(|e| StoreError::npy(path, e))
    }

    pub fn item_count(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, item_id: usize) -> Result<&[f32], StoreError> {
        let count = self.item_count();
        if item_id >= count {
            return Err(StoreError::OutOfRange { id: item_id, count });
        }
        let start = item_id * self.dim;
        Ok(&self.values[start..start + self.dim])
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.dim)
    }

    /// Scales every nonzero row to unit length. Zero rows stay zero and are
    /// counted in the returned tally; the normalized flag is only set when
    /// the tally is zero.
    pub fn normalize_rows(mut self) -> (Self, usize) {
        let mut zero_rows = 0;
        for row in self.values.chunks_exact_mut(self.dim) {
            if !normalize_in_place(row) {
                zero_rows += 1;
            }
        }
        self.normalized = zero_rows == 0;
        (self, zero_rows)
    }

    /// Checks every row is unit length and sets the normalized flag.
    pub fn verified_normalized(mut self) -> Result<Self, StoreError> {
        for (row, v) in self.rows().enumerate() {
            let norm = l2_norm(v);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(StoreError::NotNormalized { row, norm });
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn gather(&self, ids: &[usize]) -> Result<Self, StoreError> {
        let mut values = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            values.extend_from_slice(self.row(id)?);
        }
        Ok(Self {
            dim: self.dim,
            values,
            normalized: self.normalized,
        })
    }
}
