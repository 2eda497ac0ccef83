use serde::{Deserialize, Serialize};

use super::ScoringError;
use crate::store::Block;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

/// Encoded form of a query: one global vector plus `R_q ≥ 1` local vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    modality: Modality,
    global: Vec<f32>,
    locals: Vec<f32>,
    local_dim: usize,
}

impl QueryEmbedding {
    pub fn new(
        modality: Modality,
        global: Vec<f32>,
        locals: Vec<f32>,
        local_dim: usize,
    ) -> Result<Self, ScoringError> {
        let invalid = |m: &str| Err(ScoringError::InvalidQuery(m.into()));
        if global.is_empty() {
            return invalid("global vector is empty");
        }
        if local_dim == 0 || locals.is_empty() {
            return invalid("at least one local vector is required");
        }
        if !locals.len().is_multiple_of(local_dim) {
            return invalid("local values do not form whole vectors");
        }
        if global.iter().chain(&locals).any(|v| !v.is_finite()) {
            return invalid("embedding contains non-finite values");
        }
        if global.iter().all(|&v| v == 0.0) {
            return invalid("global vector is zero");
        }
        Ok(Self {
            modality,
            global,
            locals,
            local_dim,
        })
    }

    /// Builds a query from nested local rows, which must all share a length.
    pub fn from_rows(
        modality: Modality,
        global: Vec<f32>,
        locals: &[Vec<f32>],
    ) -> Result<Self, ScoringError> {
        let dim = locals.first().map_or(0, Vec::len);
        if locals.iter().any(|r| r.len() != dim) {
            return Err(ScoringError::InvalidQuery(
                "local vectors have differing lengths".into(),
            ));
        }
        Self::new(modality, global, locals.concat(), dim)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn global(&self) -> &[f32] {
        &self.global
    }

    pub fn global_dim(&self) -> usize {
        self.global.len()
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn local_count(&self) -> usize {
        self.locals.len() / self.local_dim
    }

    pub fn locals(&self) -> Block<'_> {
        Block::new(&self.locals, self.local_dim).expect("validated at construction")
    }

    /// Same query with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self, ScoringError> {
        Self::new(
            self.modality,
            self.global.iter().map(|v| v * factor).collect(),
            self.locals.iter().map(|v| v * factor).collect(),
            self.local_dim,
        )
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }
}
