use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EncoderAdapter, EncoderDims, EncoderError};
use crate::checksum::Fnv1a64;
use crate::scoring::{Modality, QueryEmbedding};

/// Leading bytes of common image containers. Payloads starting with one of
/// these are hashed raw; anything else must be UTF-8 text with at least one
/// token.
const IMAGE_SIGNATURES: &[&[u8]] = &[
    b"\x89PNG\r\n\x1a\n",
    b"\xff\xd8\xff",
    b"GIF87a",
    b"GIF89a",
    b"BM",
    b"RIFF",
];

const NOISE_SALT: u64 = 0x6e6f_6973_655f_7631;

/// Deterministic stand-in for a neural encoder.
///
/// Inputs are reduced to a 64-bit key (FNV-1a over whitespace-separated
/// tokens), mixed with the encoder seed, and used to seed a ChaCha8 stream
/// that draws a unit global vector and `local_count` unit local vectors.
/// Text and text-like image payloads with the same tokens map to the same
/// embedding, which is how synthetic corpora pair item `i`'s description and
/// image.
#[derive(Debug, Clone)]
pub struct MockEncoder {
    seed: u64,
    dim: usize,
    local_count: usize,
    noise: f32,
}

pub fn mock_encoder(seed: u64, dim: usize, local_count: usize, noise: f32) -> MockEncoder {
    MockEncoder::new(seed, dim, local_count, noise)
}

/// The raw vectors behind one embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct MockVectors {
    pub global: Vec<f32>,
    pub locals: Vec<f32>,
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub(crate) fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let mut v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    crate::store::normalize_in_place(&mut v);
    v
}

impl MockEncoder {
    /// Panics if `dim` or `local_count` is zero, or `noise` is negative.
    pub fn new(seed: u64, dim: usize, local_count: usize, noise: f32) -> Self {
        assert!(dim >= 1, "mock encoder dim must be positive");
        assert!(
            local_count >= 1,
            "mock encoder needs at least one local vector"
        );
        assert!(
            noise >= 0.0 && noise.is_finite(),
            "noise must be non-negative"
        );
        Self {
            seed,
            dim,
            local_count,
            noise,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn local_count(&self) -> usize {
        self.local_count
    }

    /// Key for a text: hash of its whitespace-separated tokens. `None` when
    /// the text has no tokens.
    pub fn text_key(text: &str) -> Option<u64> {
        let mut h = Fnv1a64::new();
        let mut any = false;
        for tok in text.split_whitespace() {
            h.update(tok.as_bytes());
            // 0xff never occurs in UTF-8, so token boundaries are unambiguous
            h.update(&[0xff]);
            any = true;
        }
        any.then(|| h.finish())
    }

    pub fn image_key(bytes: &[u8]) -> Result<u64, EncoderError> {
        if bytes.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        if IMAGE_SIGNATURES.iter().any(|sig| bytes.starts_with(sig)) {
            let mut h = Fnv1a64::new();
            h.update(bytes);
            return Ok(h.finish());
        }
        let text = std::str::from_utf8(bytes)
            .map_err(|_| EncoderError::Undecodable("unrecognized image format".into()))?;
        Self::text_key(text)
            .ok_or_else(|| EncoderError::Undecodable("image payload has no content".into()))
    }

    /// Vectors for a key, before any output noise.
    pub fn vectors_for_key(&self, key: u64) -> MockVectors {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(key)));
        let global = unit_gaussian(&mut rng, self.dim);
        let mut locals = Vec::with_capacity(self.dim * self.local_count);
        for _ in 0..self.local_count {
            locals.extend(unit_gaussian(&mut rng, self.dim));
        }
        MockVectors { global, locals }
    }

    fn embed(&self, key: u64, modality: Modality) -> QueryEmbedding {
        let mut v = self.vectors_for_key(key);
        if self.noise > 0.0 {
            let mut rng =
                ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(key) ^ NOISE_SALT));
            perturb(&mut v.global, self.dim, self.noise, &mut rng);
            perturb(&mut v.locals, self.dim, self.noise, &mut rng);
        }
        QueryEmbedding::new(modality, v.global, v.locals, self.dim)
            .expect("mock vectors are finite and unit length")
    }
}

/// Adds `sigma`-scaled Gaussian noise to each `dim`-sized row and
/// renormalizes it.
pub(crate) fn perturb(values: &mut [f32], dim: usize, sigma: f32, rng: &mut ChaCha8Rng) {
    for row in values.chunks_exact_mut(dim) {
        for v in row.iter_mut() {
            let n: f32 = StandardNormal.sample(rng);
            *v += sigma * n;
        }
        if !crate::store::normalize_in_place(row) {
            // vanishingly unlikely; keep the row usable
            row[0] = 1.0;
        }
    }
}

impl EncoderAdapter for MockEncoder {
    fn encode_text(&self, text: &str) -> Result<QueryEmbedding, EncoderError> {
        let key = Self::text_key(text).ok_or(EncoderError::EmptyInput)?;
        Ok(self.embed(key, Modality::Text))
    }

    fn encode_image(&self, bytes: &[u8]) -> Result<QueryEmbedding, EncoderError> {
        let key = Self::image_key(bytes)?;
        Ok(self.embed(key, Modality::Image))
    }

    fn dims(&self) -> EncoderDims {
        EncoderDims {
            global: self.dim,
            local: self.dim,
        }
    }

    fn mode(&self) -> &'static str {
        "mock"
    }
}
