use std::path::Path;

use super::{check_finite, normalize_in_place, StoreError};
use crate::npy::{self, NpyError};

/// A borrowed `rows × dim` block of local vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> Block<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(StoreError::Ragged {
                len: data.len(),
                dim,
            });
        }
        Ok(Self { data, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &'a [f32] {
        self.data
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'a, f32> {
        self.data.chunks_exact(self.dim)
    }
}

/// Variable-length per-item local representations. Item `i` owns rows
/// `offsets[i]..offsets[i + 1]` of the flat value array.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEmbeddingSet {
    dim: usize,
    offsets: Vec<usize>,
    values: Vec<f32>,
}

impl LocalEmbeddingSet {
    pub fn new(dim: usize, offsets: Vec<usize>, values: Vec<f32>) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        validate_offsets(&offsets)?;
        let regions = *offsets.last().expect("validated non-empty");
        if values.len() != regions * dim {
            return Err(StoreError::Offsets(format!(
                "offsets end at {regions} rows but values hold {} rows of dim {dim}",
                values.len() as f64 / dim as f64
            )));
        }
        check_finite(&values)?;
        Ok(Self {
            dim,
            offsets,
            values,
        })
    }

    pub fn empty(dim: usize) -> Result<Self, StoreError> {
        Self::new(dim, vec![0], Vec::new())
    }

    /// Builds a set from per-item flat blocks.
    pub fn from_blocks<B: AsRef<[f32]>>(dim: usize, blocks: &[B]) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        offsets.push(0);
        let mut values = Vec::new();
        for b in blocks {
            let b = b.as_ref();
            if b.len() % dim != 0 {
                return Err(StoreError::Ragged { len: b.len(), dim });
            }
            values.extend_from_slice(b);
            offsets.push(values.len() / dim);
        }
        Self::new(dim, offsets, values)
    }

    /// Loads the value matrix and its int64 prefix-sum offsets.
    pub fn load(
        values_path: &Path,
        offsets_path: &Path,
        expected_dim: Option<usize>,
    ) -> Result<Self, StoreError> {
        let (oshape, raw_offsets) =
            npy::read_i64_file(offsets_path).map_err(|e| StoreError::npy(offsets_path, e))?;
        if oshape.len() != 1 {
            return Err(StoreError::npy(
                offsets_path,
                NpyError::Rank {
                    expected: 1,
                    shape: oshape,
                },
            ));
        }
        let offsets = raw_offsets
            .iter()
            .map(|&o| usize::try_from(o))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| {
                StoreError::Offsets(format!("{}: negative offset", offsets_path.display()))
            })?;

        let (shape, values) =
            npy::read_f32_file(values_path).map_err(|e| StoreError::npy(values_path, e))?;
        let [rows, dim] = shape[..] else {
            return Err(StoreError::npy(
                values_path,
                NpyError::Rank { expected: 2, shape },
            ));
        };
        if let Some(expected) = expected_dim {
            if expected != dim {
                return Err(StoreError::DimMismatch {
                    path: values_path.into(),
                    expected,
                    found: dim,
                });
            }
        }
        validate_offsets(&offsets)
            .map_err(|e| StoreError::Offsets(format!("{}: {e}", offsets_path.display())))?;
        let last = *offsets.last().expect("validated non-empty");
        if last != rows {
            return Err(StoreError::Offsets(format!(
                "{}: last offset {last} does not equal the {rows} rows of {}",
                offsets_path.display(),
                values_path.display()
            )));
        }
        Self::new(dim, offsets, values)
    }

    pub fn write(&self, values_path: &Path, offsets_path: &Path) -> Result<(), StoreError> {
        npy::write_array_file(values_path, &[self.region_count(), self.dim], &self.values)
            .map_err(|e| StoreError::npy(values_path, e))?;
        let offsets: Vec<i64> = self.offsets.iter().map(|&o| o as i64).collect();
        npy::write_i64_file(offsets_path, &[offsets.len()], &offsets)
            .map_err(|e| StoreError::npy(offsets_path, e))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn item_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.item_count() == 0
    }

    /// Total number of local vectors across all items.
    pub fn region_count(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, item_id: usize) -> Result<Block<'_>, StoreError> {
        let count = self.item_count();
        if item_id >= count {
            return Err(StoreError::OutOfRange { id: item_id, count });
        }
        let (start, end) = (self.offsets[item_id], self.offsets[item_id + 1]);
        Ok(Block {
            data: &self.values[start * self.dim..end * self.dim],
            dim: self.dim,
        })
    }

    /// Normalizes every local vector; returns the number of zero vectors left
    /// untouched.
    pub fn normalize_rows(mut self) -> (Self, usize) {
        let mut zero_rows = 0;
        for row in self.values.chunks_exact_mut(self.dim) {
            if !normalize_in_place(row) {
                zero_rows += 1;
            }
        }
        (self, zero_rows)
    }

    pub fn gather(&self, ids: &[usize]) -> Result<Self, StoreError> {
        let mut offsets = Vec::with_capacity(ids.len() + 1);
        offsets.push(0);
        let mut values = Vec::new();
        for &id in ids {
            let block = self.row(id)?;
            values.extend_from_slice(block.as_slice());
            offsets.push(values.len() / self.dim);
        }
        Ok(Self {
            dim: self.dim,
            offsets,
            values,
        })
    }
}

fn validate_offsets(offsets: &[usize]) -> Result<(), StoreError> {
    match offsets.first() {
        None => return Err(StoreError::Offsets("offsets array is empty".into())),
        Some(&first) if first != 0 => {
            return Err(StoreError::Offsets(format!("offsets[0] is {first}, not 0")))
        }
        _ => {}
    }
    for (i, w) in offsets.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(StoreError::Offsets(format!(
                "offsets decrease at index {}: {} -> {}",
                i + 1,
                w[0],
                w[1]
            )));
        }
        if w[1] == w[0] {
            return Err(StoreError::Offsets(format!(
                "item {i} has no local vectors"
            )));
        }
    }
    Ok(())
}
