use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::engine::{Direction, Engine};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub direction: Direction,
    pub k_values: Vec<usize>,
    /// Percentages in [0, 100], keyed by k.
    pub recalls: BTreeMap<usize, f64>,
    pub query_count: usize,
}

impl RecallReport {
    /// Builds a report from each query's 1-based rank of its relevant item
    /// (`None` when it fell outside every cutoff considered).
    pub fn from_ranks(
        direction: Direction,
        ranks: &[Option<usize>],
        k_values: &[usize],
    ) -> Result<Self, EvalError> {
        if ranks.is_empty() {
            return Err(EvalError::NoQueries);
        }
        let k_values = normalize_ks(k_values)?;
        let recalls = k_values
            .iter()
            .map(|&k| {
                let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
                (k, 100.0 * hits as f64 / ranks.len() as f64)
            })
            .collect();
        Ok(Self {
            direction,
            k_values,
            recalls,
            query_count: ranks.len(),
        })
    }

    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recalls.get(&k).copied()
    }

    /// True when recall never decreases as k grows.
    pub fn is_monotone(&self) -> bool {
        self.recalls
            .values()
            .zip(self.recalls.values().skip(1))
            .all(|(a, b)| a <= b)
    }
}

fn normalize_ks(k_values: &[usize]) -> Result<Vec<usize>, EvalError> {
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(EvalError::InvalidK);
    }
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

/// Recall@k over `(query item, relevant item)` pairs. Queries use the stored
/// representations of the query-side item, so no encoder is involved.
///
/// With `parallel` set, queries fan out over the rayon pool; the ranks, and
/// so the report, are identical to a serial run.
pub fn recall_at_k(
    engine: &Engine,
    pairs: &[(usize, usize)],
    k_values: &[usize],
    direction: Direction,
    parallel: bool,
) -> Result<RecallReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let ks = normalize_ks(k_values)?;
    let depth = *ks.last().expect("non-empty");
    let rank_of = |&(query, relevant): &(usize, usize)| -> Result<Option<usize>, EvalError> {
        if query >= engine.len() || relevant >= engine.len() {
            return Err(EvalError::MissingItem(query.max(relevant)));
        }
        let embedding =
            engine.stored_query(direction.query_side(), query, direction.query_modality())?;
        let hits = engine.score(&embedding, direction, depth)?;
        Ok(hits
            .iter()
            .position(|h| h.item_id == relevant)
            .map(|p| p + 1))
    };
    let ranks: Vec<Option<usize>> = if parallel {
        pairs.par_iter().map(rank_of).collect::<Result<_, _>>()?
    } else {
        pairs.iter().map(rank_of).collect::<Result<_, _>>()?
    };
    RecallReport::from_ranks(direction, &ranks, &ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructed_ranks() {
        let r = RecallReport::from_ranks(
            Direction::TextToImage,
            &[Some(1), Some(2), Some(7), Some(20)],
            &[10, 1, 5],
        )
        .unwrap();
        assert_eq!(r.k_values, vec![1, 5, 10]);
        assert_eq!(r.recall(1), Some(25.0));
        assert_eq!(r.recall(5), Some(50.0));
        assert_eq!(r.recall(10), Some(75.0));
        assert!(r.is_monotone());
    }

    #[test]
    fn rejects_empty_and_zero_k() {
        assert!(RecallReport::from_ranks(Direction::TextToImage, &[], &[1]).is_err());
        assert!(RecallReport::from_ranks(Direction::TextToImage, &[Some(1)], &[0]).is_err());
    }
}
