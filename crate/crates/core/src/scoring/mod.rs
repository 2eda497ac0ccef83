//! Global, local, and fused similarity between a query and corpus items.
//!
//! Global similarity is the cosine between single summary vectors. Local
//! similarity lets each query-side local vector attend over the target's
//! local vectors (softmax with temperature λ over cosines), builds an
//! attended context vector, and scores the cosine between the two; per-vector
//! scores are then averaged (or log-sum-exp pooled). The fused score is the
//! affine blend `alpha * global + (1 - alpha) * local`.

mod gallery;
mod local;
mod query;
mod rank;
mod similarity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gallery::{global_scores, Gallery, ScoreOptions};
pub use local::{attention_weights, local_alignment_score};
pub use query::{Modality, QueryEmbedding};
pub use rank::{merge_top_k, rank_top_k, TopK};
pub use similarity::{cosine, degenerate_input_count, dot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("{what} dimension mismatch: expected {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("temperature {0} must be positive and finite")]
    InvalidTemperature(f64),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("local block is empty")]
    EmptyBlock,
    #[error("invalid query embedding: {0}")]
    InvalidQuery(String),
}

/// How per-query-vector local scores are pooled into one item score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalAggregation {
    #[default]
    Mean,
    /// `(1/λ) ln(mean_i exp(λ s_i))`, a soft maximum bounded by the min and
    /// max of the per-vector scores.
    LogSumExp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Weight of the global score.
    pub alpha: f64,
    /// Softmax sharpness for local attention.
    pub temperature_lambda: f64,
    pub local_aggregation: LocalAggregation,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature_lambda: 9.0,
            local_aggregation: LocalAggregation::Mean,
        }
    }
}

impl FusionConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ScoringError::InvalidAlpha(self.alpha));
        }
        if !(self.temperature_lambda > 0.0 && self.temperature_lambda.is_finite()) {
            return Err(ScoringError::InvalidTemperature(self.temperature_lambda));
        }
        Ok(())
    }
}

/// Per-item scores. `fused = alpha * global + (1 - alpha) * local`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub item_id: usize,
    pub global_score: f64,
    pub local_score: f64,
    pub fused_score: f64,
}

pub fn fuse(global_score: f64, local_score: f64, alpha: f64) -> Result<f64, ScoringError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ScoringError::InvalidAlpha(alpha));
    }
    Ok(fuse_unchecked(global_score, local_score, alpha))
}

#[inline]
pub(crate) fn fuse_unchecked(global_score: f64, local_score: f64, alpha: f64) -> f64 {
    alpha * global_score + (1.0 - alpha) * local_score
}
