//! The boundary between the engine and whatever turns raw text or image bytes
//! into query embeddings.
//!
//! Two adapters ship here: a deterministic hash-seeded [`MockEncoder`] used
//! for tests and synthetic corpora, and a [`RemoteEncoder`] that calls an
//! external encoder service over HTTP.

pub(crate) mod mock;
mod remote;

use thiserror::Error;

use crate::scoring::QueryEmbedding;

pub use mock::{mock_encoder, MockEncoder, MockVectors};
pub use remote::{remote_encoder, RemoteEncoder, DEFAULT_TIMEOUT_MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub global: usize,
    pub local: usize,
}

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("empty input")]
    EmptyInput,
    #[error("image could not be decoded: {0}")]
    Undecodable(String),
    #[error("encoder timed out after {0} ms")]
    Timeout(u64),
    #[error("encoder unreachable: {0}")]
    Unreachable(String),
    #[error("encoder returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed encoder response: {0}")]
    Malformed(String),
    #[error("{what} dimension mismatch: expected {expected}, got {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid endpoint url: {0}")]
    BadUrl(String),
    #[error("transport error: {0}")]
    Transport(String),
}

/// Turns raw queries into embeddings. Implementations must be safe to call
/// from many request handlers at once.
pub trait EncoderAdapter: Send + Sync {
    fn encode_text(&self, text: &str) -> Result<QueryEmbedding, EncoderError>;
    fn encode_image(&self, bytes: &[u8]) -> Result<QueryEmbedding, EncoderError>;
    fn dims(&self) -> EncoderDims;
    /// Short label for health reporting, e.g. `"mock"`.
    fn mode(&self) -> &'static str;
}

impl<T: EncoderAdapter + ?Sized> EncoderAdapter for std::sync::Arc<T> {
    fn encode_text(&self, text: &str) -> Result<QueryEmbedding, EncoderError> {
        (**self).encode_text(text)
    }
    fn encode_image(&self, bytes: &[u8]) -> Result<QueryEmbedding, EncoderError> {
        (**self).encode_image(bytes)
    }
    fn dims(&self) -> EncoderDims {
        (**self).dims()
    }
    fn mode(&self) -> &'static str {
        (**self).mode()
    }
}
