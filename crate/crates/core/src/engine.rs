//! End-to-end query pipeline: encode (unless precomputed), score against the
//! opposite side of the corpus, and attach catalog entries.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderAdapter, EncoderError};
use crate::scoring::{
    FusionConfig, Gallery, Modality, QueryEmbedding, ScoreBreakdown, ScoreOptions, ScoringError,
};
use crate::store::{Catalog, CatalogEntry, Corpus, Side, StoreError};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("encoder failed: {0}")]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("{direction} needs a {expected:?} query, got {found:?}")]
    WrongModality {
        direction: Direction,
        expected: Modality,
        found: Modality,
    },
    #[error("encoder produces {encoder:?} dims but the stores hold {stores:?} (global, local)")]
    EncoderDims {
        encoder: (usize, usize),
        stores: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    TextToImage,
    ImageToText,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::ImageToText, Direction::TextToImage];

    pub fn query_modality(self) -> Modality {
        match self {
            Direction::TextToImage => Modality::Text,
            Direction::ImageToText => Modality::Image,
        }
    }

    /// The side whose stored representations are ranked.
    pub fn target_side(self) -> Side {
        match self {
            Direction::TextToImage => Side::Images,
            Direction::ImageToText => Side::Descriptions,
        }
    }

    /// The side whose stored representations stand in for queries during
    /// evaluation.
    pub fn query_side(self) -> Side {
        match self {
            Direction::TextToImage => Side::Descriptions,
            Direction::ImageToText => Side::Images,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TextToImage => "text-to-image",
            Direction::ImageToText => "image-to-text",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text-to-image" | "t2i" => Ok(Direction::TextToImage),
            "image-to-text" | "i2t" => Ok(Direction::ImageToText),
            other => Err(format!("unknown direction '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryInput {
    Text(String),
    Image(Vec<u8>),
    Precomputed(QueryEmbedding),
}

/// A search request. The input enum guarantees exactly one payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    input: QueryInput,
    k: usize,
}

impl Query {
    pub fn text(text: impl Into<String>, k: usize) -> Result<Self, EngineError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EngineError::InvalidQuery("text is empty".into()));
        }
        Self::new(QueryInput::Text(text), k)
    }

    pub fn image(bytes: Vec<u8>, k: usize) -> Result<Self, EngineError> {
        if bytes.is_empty() {
            return Err(EngineError::InvalidQuery("image is empty".into()));
        }
        Self::new(QueryInput::Image(bytes), k)
    }

    pub fn precomputed(embedding: QueryEmbedding, k: usize) -> Result<Self, EngineError> {
        Self::new(QueryInput::Precomputed(embedding), k)
    }

    fn new(input: QueryInput, k: usize) -> Result<Self, EngineError> {
        if k == 0 {
            return Err(EngineError::InvalidQuery("k must be at least 1".into()));
        }
        Ok(Self { input, k })
    }

    pub fn modality(&self) -> Modality {
        match &self.input {
            QueryInput::Text(_) => Modality::Text,
            QueryInput::Image(_) => Modality::Image,
            QueryInput::Precomputed(e) => e.modality(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn input(&self) -> &QueryInput {
        &self.input
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedResult {
    /// 1-based.
    pub rank: usize,
    pub breakdown: ScoreBreakdown,
    /// Catalog entry of the ranked item. For image-to-text results this is
    /// the description's entry, which also names its paired image.
    pub entry: CatalogEntry,
}

/// A loaded corpus plus encoder, ready to answer queries. Immutable once
/// built and safe to share across threads.
pub struct Engine {
    name: String,
    catalog: Catalog,
    images: Gallery,
    descriptions: Gallery,
    fusion: FusionConfig,
    encoder: Arc<dyn EncoderAdapter>,
    options: ScoreOptions,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("name", &self.name)
            .field("items", &self.len())
            .field("fusion", &self.fusion)
            .field("encoder", &self.encoder.mode())
            .finish()
    }
}

impl Engine {
    pub fn new(
        corpus: Corpus,
        fusion: FusionConfig,
        encoder: Arc<dyn EncoderAdapter>,
    ) -> Result<Self, EngineError> {
        fusion.validate()?;
        let stores = (corpus.global_dim(), corpus.local_dim());
        let d = encoder.dims();
        if (d.global, d.local) != stores {
            return Err(EngineError::EncoderDims {
                encoder: (d.global, d.local),
                stores,
            });
        }
        let Corpus {
            name,
            images,
            descriptions,
            catalog,
            ..
        } = corpus;
        Ok(Self {
            name,
            catalog,
            images: Gallery::new(images),
            descriptions: Gallery::new(descriptions),
            fusion,
            encoder,
            options: ScoreOptions::default(),
        })
    }

    pub fn with_options(mut self, options: ScoreOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_fusion(mut self, fusion: FusionConfig) -> Result<Self, EngineError> {
        fusion.validate()?;
        self.fusion = fusion;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.catalog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.catalog.is_empty()
    }

    pub fn fusion(&self) -> &FusionConfig {
        &self.fusion
    }

    pub fn options(&self) -> ScoreOptions {
        self.options
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn encoder_mode(&self) -> &'static str {
        self.encoder.mode()
    }

    /// (global, local) dims of the stores.
    pub fn dims(&self) -> (usize, usize) {
        let side = self.images.side();
        (side.global.dim(), side.local.dim())
    }

    pub fn gallery(&self, side: Side) -> &Gallery {
        match side {
            Side::Images => &self.images,
            Side::Descriptions => &self.descriptions,
        }
    }

    /// A stored item's representations packaged as a query.
    pub fn stored_query(
        &self,
        side: Side,
        item_id: usize,
        modality: Modality,
    ) -> Result<QueryEmbedding, EngineError> {
        let s = self.gallery(side).side();
        let global = s.global.row(item_id)?.to_vec();
        let locals = s.local.row(item_id)?;
        Ok(QueryEmbedding::new(
            modality,
            global,
            locals.as_slice().to_vec(),
            locals.dim(),
        )?)
    }

    fn embed(&self, query: &Query) -> Result<QueryEmbedding, EngineError> {
        Ok(match query.input() {
            QueryInput::Text(t) => self.encoder.encode_text(t)?,
            QueryInput::Image(b) => self.encoder.encode_image(b)?,
            QueryInput::Precomputed(e) => e.clone(),
        })
    }

    /// Ranks images for a text query.
    pub fn text_to_image(&self, query: &Query) -> Result<Vec<RankedResult>, EngineError> {
        self.run(query, Direction::TextToImage)
    }

    /// Ranks descriptions for an image query.
    pub fn image_to_text(&self, query: &Query) -> Result<Vec<RankedResult>, EngineError> {
        self.run(query, Direction::ImageToText)
    }

    /// Dispatches on the query's modality.
    pub fn search(&self, query: &Query) -> Result<Vec<RankedResult>, EngineError> {
        match query.modality() {
            Modality::Text => self.text_to_image(query),
            Modality::Image => self.image_to_text(query),
        }
    }

    fn run(&self, query: &Query, direction: Direction) -> Result<Vec<RankedResult>, EngineError> {
        let expected = direction.query_modality();
        if query.modality() != expected {
            return Err(EngineError::WrongModality {
                direction,
                expected,
                found: query.modality(),
            });
        }
        let embedding = self.embed(query)?;
        self.search_embedding(&embedding, direction, query.k())
    }

    /// Scores a ready embedding; the path evaluation and benchmarks time.
    pub fn search_embedding(
        &self,
        embedding: &QueryEmbedding,
        direction: Direction,
        k: usize,
    ) -> Result<Vec<RankedResult>, EngineError> {
        let hits = self.score(embedding, direction, k)?;
        Ok(self.assemble(hits))
    }

    /// Scores without catalog assembly.
    pub fn score(
        &self,
        embedding: &QueryEmbedding,
        direction: Direction,
        k: usize,
    ) -> Result<Vec<ScoreBreakdown>, EngineError> {
        let gallery = self.gallery(direction.target_side());
        Ok(gallery.search(embedding, &self.fusion, k, self.options)?)
    }

    fn assemble(&self, hits: Vec<ScoreBreakdown>) -> Vec<RankedResult> {
        hits.into_iter()
            .enumerate()
            .map(|(i, breakdown)| RankedResult {
                rank: i + 1,
                entry: self
                    .catalog
                    .get(breakdown.item_id)
                    .cloned()
                    .expect("catalog covers every stored item"),
                breakdown,
            })
            .collect()
    }
}
