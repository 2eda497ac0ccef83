use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StoreError;

/// Metadata for one image/description pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub item_id: usize,
    pub external_id: String,
    pub description: String,
    pub image_uri: String,
    pub source_url: String,
}

/// On-disk line format; the item id is the zero-based line number.
#[derive(Serialize, Deserialize)]
struct CatalogLine<'a> {
    external_id: std::borrow::Cow<'a, str>,
    description: std::borrow::Cow<'a, str>,
    #[serde(default)]
    image_uri: std::borrow::Cow<'a, str>,
    #[serde(default)]
    source_url: std::borrow::Cow<'a, str>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    entries: Vec<CatalogEntry>,
}

impl Catalog {
    /// Builds a catalog, renumbering ids to match position.
    pub fn from_entries(entries: Vec<CatalogEntry>) -> Result<Self, StoreError> {
        let entries: Vec<_> = entries
            .into_iter()
            .enumerate()
            .map(|(i, mut e)| {
                e.item_id = i;
                e
            })
            .collect();
        if let Some(e) = entries.iter().find(|e| e.description.trim().is_empty()) {
            return Err(StoreError::Inconsistent(format!(
                "catalog entry {} has an empty description",
                e.item_id
            )));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let file = File::open(path).map_err(|e| StoreError::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| StoreError::io(path, e))?;
            let bad = |reason: String| StoreError::Catalog {
                path: path.into(),
                line: i + 1,
                reason,
            };
            let rec: CatalogLine<'_> =
                serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if rec.description.trim().is_empty() {
                return Err(bad("empty description".into()));
            }
            entries.push(CatalogEntry {
                item_id: i,
                external_id: rec.external_id.into_owned(),
                description: rec.description.into_owned(),
                image_uri: rec.image_uri.into_owned(),
                source_url: rec.source_url.into_owned(),
            });
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<(), StoreError> {
        let io_err = |e| StoreError::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for e in &self.entries {
            let line = CatalogLine {
                external_id: e.external_id.as_str().into(),
                description: e.description.as_str().into(),
                image_uri: e.image_uri.as_str().into(),
                source_url: e.source_url.as_str().into(),
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| io_err(e.into()))?;
            out.write_all(b"\n").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, item_id: usize) -> Option<&CatalogEntry> {
        self.entries.get(item_id)
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn gather(&self, ids: &[usize]) -> Result<Self, StoreError> {
        let picked = ids
            .iter()
            .map(|&id| {
                self.get(id).cloned().ok_or(StoreError::OutOfRange {
                    id,
                    count: self.len(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_entries(picked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(ext: &str, desc: &str) -> CatalogEntry {
        CatalogEntry {
            item_id: 99,
            external_id: ext.into(),
            description: desc.into(),
            image_uri: format!("images/{ext}.jpg"),
            source_url: format!("https://example.org/art/{ext}"),
        }
    }

    #[test]
    fn round_trip_assigns_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.jsonl");
        let cat = Catalog::from_entries(vec![
            entry("a", "a cow in the room"),
            entry("b", "two trains"),
        ])
        .unwrap();
        cat.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(!text.contains("item_id"));
        let back = Catalog::load(&path).unwrap();
        assert_eq!(back, cat);
        assert_eq!(back.get(1).unwrap().item_id, 1);
    }

    #[test]
    fn unknown_fields_ignored_and_errors_carry_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"external_id\":\"x\",\"description\":\"d\",\"extra\":1}\n{\"external_id\":\"y\",\"description\":\"\"}\n",
        )
        .unwrap();
        match Catalog::load(&path) {
            Err(StoreError::Catalog { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn blank_interior_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"external_id\":\"x\",\"description\":\"d\"}\n\n").unwrap();
        assert!(Catalog::load(&path).is_err());
    }
}
