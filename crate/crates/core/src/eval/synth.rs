use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::encoder::mock::{perturb, splitmix64};
use crate::encoder::MockEncoder;
use crate::store::{Catalog, CatalogEntry, Corpus, CorpusSide, EmbeddingMatrix, LocalEmbeddingSet};

const IMAGE_SALT: u64 = 0x696d_6167_655f_7631;
const DESCRIPTION_SALT: u64 = 0x6465_7363_725f_7631;

pub const PAIRS_FILE: &str = "pairs.json";
pub const SERVICE_FILE: &str = "service.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n: usize,
    pub dim: usize,
    pub local_count: usize,
    /// Per-component Gaussian σ added to each side before renormalizing.
    pub noise: f32,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub params: SynthParams,
    pub corpus: Corpus,
    /// Ground truth: query item `i` is relevant to target item `i`.
    pub pairs: Vec<(usize, usize)>,
    /// Noise-free mock encoder whose text embedding of `item-i` is item `i`'s
    /// latent.
    pub encoder: MockEncoder,
}

pub fn synthetic_description(i: usize) -> String {
    format!("item-{i}")
}

/// A payload the mock encoder accepts as an image of item `i`.
pub fn synthetic_image_bytes(i: usize) -> Vec<u8> {
    synthetic_description(i).into_bytes()
}

fn side_rng(seed: u64, salt: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ salt ^ splitmix64(i as u64)))
}

struct ItemVectors {
    image_global: Vec<f32>,
    image_locals: Vec<f32>,
    description_global: Vec<f32>,
    description_locals: Vec<f32>,
}

/// Builds a paired corpus of `n` items. Every item gets a latent drawn by the
/// mock encoder from the key of `item-i`; each side then receives its own
/// seeded noise. Items are generated independently, so output does not
/// depend on thread count.
pub fn generate_synthetic_corpus(params: &SynthParams) -> Result<SyntheticCorpus, EvalError> {
    let SynthParams {
        n,
        dim,
        local_count,
        noise,
        seed,
    } = *params;
    if n == 0 || dim == 0 || local_count == 0 {
        return Err(EvalError::InvalidParams(
            "n, dim and local_count must be positive".into(),
        ));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(EvalError::InvalidParams(format!(
            "noise must be >= 0, got {noise}"
        )));
    }
    let encoder = MockEncoder::new(seed, dim, local_count, 0.0);

    let items: Vec<ItemVectors> = (0..n)
        .into_par_iter()
        .map(|i| {
            let key = MockEncoder::text_key(&synthetic_description(i)).expect("non-empty");
            let latent = encoder.vectors_for_key(key);
            let side = |salt| {
                let mut g = latent.global.clone();
                let mut l = latent.locals.clone();
                if noise > 0.0 {
                    let mut rng = side_rng(seed, salt, i);
                    perturb(&mut g, dim, noise, &mut rng);
                    perturb(&mut l, dim, noise, &mut rng);
                }
                (g, l)
            };
            let (image_global, image_locals) = side(IMAGE_SALT);
            let (description_global, description_locals) = side(DESCRIPTION_SALT);
            ItemVectors {
                image_global,
                image_locals,
                description_global,
                description_locals,
            }
        })
        .collect();

    let build = |global: fn(&ItemVectors) -> &[f32], locals: fn(&ItemVectors) -> &[f32]| {
        let mut g = Vec::with_capacity(n * dim);
        let mut l = Vec::with_capacity(n * dim * local_count);
        for it in &items {
            g.extend_from_slice(global(it));
            l.extend_from_slice(locals(it));
        }
        let offsets = (0..=n).map(|i| i * local_count).collect();
        let (g, _) = EmbeddingMatrix::new(dim, g)?.normalize_rows();
        CorpusSide::new(g, LocalEmbeddingSet::new(dim, offsets, l)?)
    };
    let images = build(|it| &it.image_global, |it| &it.image_locals)?;
    let descriptions = build(|it| &it.description_global, |it| &it.description_locals)?;
    drop(items);

    let catalog = Catalog::from_entries(
        (0..n)
            .map(|i| CatalogEntry {
                item_id: i,
                external_id: format!("synth-{i:06}"),
                description: synthetic_description(i),
                image_uri: format!("synthetic://image/{i}"),
                source_url: format!("https://example.invalid/items/{i}"),
            })
            .collect(),
    )?;
    let corpus = Corpus::new(
        format!("synthetic-{n}-seed{seed}"),
        images,
        descriptions,
        catalog,
    )?;
    Ok(SyntheticCorpus {
        params: *params,
        corpus,
        pairs: (0..n).map(|i| (i, i)).collect(),
        encoder,
    })
}

/// Sample service configuration pointing at a synthetic store with a
/// matching mock encoder.
#[derive(Serialize)]
struct SampleService {
    manifest: &'static str,
    encoder: SampleEncoder,
}

#[derive(Serialize)]
struct SampleEncoder {
    mode: &'static str,
    mock_seed: u64,
    mock_local_count: usize,
}

/// Writes the stores, manifest, `pairs.json`, and a sample `service.json`
/// into `dir`. Returns the manifest path.
pub fn write_synthetic_corpus(synth: &SyntheticCorpus, dir: &Path) -> Result<PathBuf, EvalError> {
    let manifest = synth.corpus.write(dir)?;
    write_json(&dir.join(PAIRS_FILE), &synth.pairs)?;
    write_json(
        &dir.join(SERVICE_FILE),
        &SampleService {
            manifest: crate::store::MANIFEST_FILE,
            encoder: SampleEncoder {
                mode: "mock",
                mock_seed: synth.params.seed,
                mock_local_count: synth.params.local_count,
            },
        },
    )?;
    Ok(manifest)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), EvalError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| EvalError::Json(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a pair list written by [`write_synthetic_corpus`].
pub fn load_pairs(path: &Path) -> Result<Vec<(usize, usize)>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| EvalError::Json(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderAdapter;

    fn params(noise: f32) -> SynthParams {
        SynthParams {
            n: 20,
            dim: 8,
            local_count: 3,
            noise,
            seed: 5,
        }
    }

    #[test]
    fn noise_free_sides_identical() {
        let s = generate_synthetic_corpus(&params(0.0)).unwrap();
        assert_eq!(s.corpus.images, s.corpus.descriptions);
        assert_eq!(s.corpus.len(), 20);
        assert!(s.corpus.images.global.is_normalized());
        assert_eq!(s.pairs[7], (7, 7));
    }

    #[test]
    fn text_encoding_reproduces_latent() {
        let s = generate_synthetic_corpus(&params(0.5)).unwrap();
        let q = s.encoder.encode_text("item-4").unwrap();
        let clean = generate_synthetic_corpus(&params(0.0)).unwrap();
        assert_eq!(q.global(), clean.corpus.descriptions.global.row(4).unwrap());
        assert_ne!(q.global(), s.corpus.descriptions.global.row(4).unwrap());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(generate_synthetic_corpus(&SynthParams {
            n: 0,
            ..params(0.0)
        })
        .is_err());
        assert!(generate_synthetic_corpus(&params(-1.0)).is_err());
    }

    #[test]
    fn catalog_placeholders() {
        let s = generate_synthetic_corpus(&params(0.0)).unwrap();
        let e = s.corpus.catalog.get(3).unwrap();
        assert_eq!(e.external_id, "synth-000003");
        assert_eq!(e.description, "item-3");
        assert_eq!(synthetic_image_bytes(3), b"item-3");
    }
}
