use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::checksum;
use crate::npy::{self, Dtype, NpyError};

/// A store file and its expected content checksum. Relative paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: PathBuf,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreFiles {
    pub image_global: FileRef,
    pub image_local: FileRef,
    pub image_local_offsets: FileRef,
    pub description_global: FileRef,
    pub description_local: FileRef,
    pub description_local_offsets: FileRef,
    pub catalog: FileRef,
}

impl StoreFiles {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &FileRef)> {
        [
            ("image_global", &self.image_global),
            ("image_local", &self.image_local),
            ("image_local_offsets", &self.image_local_offsets),
            ("description_global", &self.description_global),
            ("description_local", &self.description_local),
            ("description_local_offsets", &self.description_local_offsets),
            ("catalog", &self.catalog),
        ]
        .into_iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub corpus_name: String,
    pub image_count: usize,
    pub description_count: usize,
    pub global_dim: usize,
    pub local_dim: usize,
    pub files: StoreFiles,
    pub normalized_at_ingest: bool,
    pub default_fusion_weight: f64,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl StoreManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        corpus_name: impl Into<String>,
        image_count: usize,
        description_count: usize,
        global_dim: usize,
        local_dim: usize,
        files: StoreFiles,
        normalized_at_ingest: bool,
        default_fusion_weight: f64,
        base_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            corpus_name: corpus_name.into(),
            image_count,
            description_count,
            global_dim,
            local_dim,
            files,
            normalized_at_ingest,
            default_fusion_weight,
            base_dir: base_dir.into(),
        }
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, file: &FileRef) -> PathBuf {
        if file.path.is_absolute() {
            file.path.clone()
        } else {
            self.base_dir.join(&file.path)
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n").map_err(|e| StoreError::io(path, e))
    }

    fn invalid(&self, path: &Path, reason: impl Into<String>) -> StoreError {
        StoreError::Manifest {
            path: path.into(),
            reason: reason.into(),
        }
    }

    fn validate_fields(&self, path: &Path) -> Result<(), StoreError> {
        if self.global_dim == 0 || self.local_dim == 0 {
            return Err(self.invalid(path, "dimensions must be positive"));
        }
        if !(0.0..=1.0).contains(&self.default_fusion_weight) {
            return Err(self.invalid(path, "default_fusion_weight must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Checks file presence, checksums, and header shapes against the
    /// declared counts and dims.
    fn verify_files(&self) -> Result<(), StoreError> {
        for (_, file) in self.files.iter() {
            let path = self.resolve(file);
            if !path.is_file() {
                return Err(StoreError::MissingFile { path });
            }
            let found = checksum::file_checksum(&path).map_err(|e| StoreError::io(&path, e))?;
            if !found.eq_ignore_ascii_case(&file.checksum) {
                return Err(StoreError::ChecksumMismatch {
                    path,
                    expected: file.checksum.clone(),
                    found,
                });
            }
        }

        let f = &self.files;
        self.check_matrix(&f.image_global, Some(self.image_count), self.global_dim)?;
        self.check_matrix(
            &f.description_global,
            Some(self.description_count),
            self.global_dim,
        )?;
        self.check_matrix(&f.image_local, None, self.local_dim)?;
        self.check_matrix(&f.description_local, None, self.local_dim)?;
        self.check_offsets(&f.image_local_offsets, self.image_count)?;
        self.check_offsets(&f.description_local_offsets, self.description_count)?;
        Ok(())
    }

    fn check_matrix(
        &self,
        file: &FileRef,
        rows: Option<usize>,
        dim: usize,
    ) -> Result<(), StoreError> {
        let path = self.resolve(file);
        let header = npy::read_header_file(&path).map_err(|e| StoreError::npy(&path, e))?;
        let [found_rows, found_dim] = header.shape[..] else {
            return Err(StoreError::Rank {
                path,
                expected: 2,
                shape: header.shape,
            });
        };
        if header.dtype != Dtype::F32 {
            return Err(StoreError::npy(
                &path,
                NpyError::UnsupportedDtype {
                    found: header.dtype.descr().into(),
                    expected: Dtype::F32.descr(),
                },
            ));
        }
        if found_dim != dim {
            return Err(StoreError::DimMismatch {
                path,
                expected: dim,
                found: found_dim,
            });
        }
        if let Some(expected) = rows {
            if found_rows != expected {
                return Err(StoreError::CountMismatch {
                    path,
                    expected,
                    found: found_rows,
                });
            }
        }
        Ok(())
    }

    fn check_offsets(&self, file: &FileRef, items: usize) -> Result<(), StoreError> {
        let path = self.resolve(file);
        let header = npy::read_header_file(&path).map_err(|e| StoreError::npy(&path, e))?;
        match header.shape[..] {
            [n] if n == items + 1 => Ok(()),
            [n] => Err(StoreError::CountMismatch {
                path,
                expected: items + 1,
                found: n,
            }),
            _ => Err(StoreError::Rank {
                path,
                expected: 1,
                shape: header.shape,
            }),
        }
    }
}

/// Reads a manifest and verifies every file it names.
pub fn load_manifest(path: &Path) -> Result<StoreManifest, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    let mut manifest: StoreManifest =
        serde_json::from_str(&text).map_err(|e| StoreError::Manifest {
            path: path.into(),
            reason: e.to_string(),
        })?;
    manifest.base_dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    manifest.validate_fields(path)?;
    manifest.verify_files()?;
    Ok(manifest)
}
