use std::path::{Path, PathBuf};

use super::{
    load_manifest, Catalog, EmbeddingMatrix, FileRef, LocalEmbeddingSet, StoreError, StoreFiles,
    StoreManifest,
};
use crate::checksum;

/// Which half of the paired corpus a store describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Images,
    Descriptions,
}

/// Global and local representations for one side of the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSide {
    pub global: EmbeddingMatrix,
    pub local: LocalEmbeddingSet,
}

impl CorpusSide {
    pub fn new(global: EmbeddingMatrix, local: LocalEmbeddingSet) -> Result<Self, StoreError> {
        if global.item_count() != local.item_count() {
            return Err(StoreError::Inconsistent(format!(
                "{} global rows but {} local items",
                global.item_count(),
                local.item_count()
            )));
        }
        Ok(Self { global, local })
    }

    pub fn item_count(&self) -> usize {
        self.global.item_count()
    }

    fn gather(&self, ids: &[usize]) -> Result<Self, StoreError> {
        Ok(Self {
            global: self.global.gather(ids)?,
            local: self.local.gather(ids)?,
        })
    }
}

/// A fully loaded paired corpus: image `i` pairs with description `i`, and
/// both share catalog entry `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub images: CorpusSide,
    pub descriptions: CorpusSide,
    pub catalog: Catalog,
    pub default_fusion_weight: f64,
}

const IMAGE_GLOBAL: &str = "image_global.npy";
const IMAGE_LOCAL: &str = "image_local.npy";
const IMAGE_LOCAL_OFFSETS: &str = "image_local_offsets.npy";
const DESCRIPTION_GLOBAL: &str = "description_global.npy";
const DESCRIPTION_LOCAL: &str = "description_local.npy";
const DESCRIPTION_LOCAL_OFFSETS: &str = "description_local_offsets.npy";
const CATALOG: &str = "catalog.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        images: CorpusSide,
        descriptions: CorpusSide,
        catalog: Catalog,
    ) -> Result<Self, StoreError> {
        let n = images.item_count();
        if descriptions.item_count() != n || catalog.len() != n {
            return Err(StoreError::Inconsistent(format!(
                "pairing requires equal counts: {n} images, {} descriptions, {} catalog entries",
                descriptions.item_count(),
                catalog.len()
            )));
        }
        if images.global.dim() != descriptions.global.dim() {
            return Err(StoreError::Inconsistent(
                "global dims differ between sides".into(),
            ));
        }
        if images.local.dim() != descriptions.local.dim() {
            return Err(StoreError::Inconsistent(
                "local dims differ between sides".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            images,
            descriptions,
            catalog,
            default_fusion_weight: 0.5,
        })
    }

    pub fn len(&self) -> usize {
        self.catalog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.catalog.is_empty()
    }

    pub fn global_dim(&self) -> usize {
        self.images.global.dim()
    }

    pub fn local_dim(&self) -> usize {
        self.images.local.dim()
    }

    pub fn side(&self, side: Side) -> &CorpusSide {
        match side {
            Side::Images => &self.images,
            Side::Descriptions => &self.descriptions,
        }
    }

    /// Loads and verifies a corpus from its manifest.
    pub fn open(manifest_path: &Path) -> Result<(StoreManifest, Self), StoreError> {
        let manifest = load_manifest(manifest_path)?;
        let corpus = Self::from_manifest(&manifest)?;
        Ok((manifest, corpus))
    }

    /// Loads the stores named by an already-verified manifest.
    pub fn from_manifest(m: &StoreManifest) -> Result<Self, StoreError> {
        let f = &m.files;
        let load_side = |global: &FileRef, local: &FileRef, offsets: &FileRef| {
            let mut g = EmbeddingMatrix::load(&m.resolve(global), Some(m.global_dim))?;
            if m.normalized_at_ingest {
                g = g.verified_normalized()?;
            }
            let l =
                LocalEmbeddingSet::load(&m.resolve(local), &m.resolve(offsets), Some(m.local_dim))?;
            CorpusSide::new(g, l)
        };
        let images = load_side(&f.image_global, &f.image_local, &f.image_local_offsets)?;
        let descriptions = load_side(
            &f.description_global,
            &f.description_local,
            &f.description_local_offsets,
        )?;
        let catalog = Catalog::load(&m.resolve(&f.catalog))?;
        let mut corpus = Self::new(m.corpus_name.clone(), images, descriptions, catalog)?;
        corpus.default_fusion_weight = m.default_fusion_weight;
        Ok(corpus)
    }

    /// Writes every store plus a checksummed manifest into `dir` and returns
    /// the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, StoreError> {
        std::fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        self.images.global.write(&dir.join(IMAGE_GLOBAL))?;
        self.images
            .local
            .write(&dir.join(IMAGE_LOCAL), &dir.join(IMAGE_LOCAL_OFFSETS))?;
        self.descriptions
            .global
            .write(&dir.join(DESCRIPTION_GLOBAL))?;
        self.descriptions.local.write(
            &dir.join(DESCRIPTION_LOCAL),
            &dir.join(DESCRIPTION_LOCAL_OFFSETS),
        )?;
        self.catalog.write(&dir.join(CATALOG))?;

        let files = StoreFiles {
            image_global: file_ref(dir, IMAGE_GLOBAL)?,
            image_local: file_ref(dir, IMAGE_LOCAL)?,
            image_local_offsets: file_ref(dir, IMAGE_LOCAL_OFFSETS)?,
            description_global: file_ref(dir, DESCRIPTION_GLOBAL)?,
            description_local: file_ref(dir, DESCRIPTION_LOCAL)?,
            description_local_offsets: file_ref(dir, DESCRIPTION_LOCAL_OFFSETS)?,
            catalog: file_ref(dir, CATALOG)?,
        };
        let manifest = StoreManifest::new(
            self.name.clone(),
            self.images.item_count(),
            self.descriptions.item_count(),
            self.global_dim(),
            self.local_dim(),
            files,
            self.images.global.is_normalized() && self.descriptions.global.is_normalized(),
            self.default_fusion_weight,
            dir,
        );
        let path = dir.join(MANIFEST_FILE);
        manifest.save(&path)?;
        Ok(path)
    }

    /// Restricts the corpus to `ids`, renumbering items densely in the given
    /// order.
    pub fn subset(&self, ids: &[usize]) -> Result<Self, StoreError> {
        let mut sub = Self::new(
            self.name.clone(),
            self.images.gather(ids)?,
            self.descriptions.gather(ids)?,
            self.catalog.gather(ids)?,
        )?;
        sub.default_fusion_weight = self.default_fusion_weight;
        Ok(sub)
    }
}

/// Checksums an existing file for inclusion in a manifest.
pub fn file_ref(dir: &Path, name: &str) -> Result<FileRef, StoreError> {
    let path = dir.join(name);
    let checksum = checksum::file_checksum(&path).map_err(|e| StoreError::io(&path, e))?;
    Ok(FileRef {
        path: PathBuf::from(name),
        checksum,
    })
}
