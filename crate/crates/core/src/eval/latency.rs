use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::engine::{Direction, Engine};
use crate::scoring::QueryEmbedding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub direction: Direction,
    pub query_count: usize,
    pub repetitions: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl LatencyReport {
    /// Aggregates raw per-query timings (nearest-rank percentiles).
    pub fn from_samples(
        direction: Direction,
        query_count: usize,
        repetitions: usize,
        samples_ms: &[f64],
    ) -> Result<Self, EvalError> {
        if samples_ms.is_empty() {
            return Err(EvalError::NoQueries);
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let pct = |p: f64| {
            let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
            sorted[rank.clamp(1, sorted.len()) - 1]
        };
        Ok(Self {
            direction,
            query_count,
            repetitions,
            mean_ms: samples_ms.iter().sum::<f64>() / samples_ms.len() as f64,
            p50_ms: pct(50.0),
            p95_ms: pct(95.0),
        })
    }
}

/// Times `search_embedding` (scoring, ranking, result assembly) per query.
/// One untimed warm-up pass over all queries runs first. The engine's own
/// score options decide threading.
pub fn latency_bench(
    engine: &Engine,
    queries: &[QueryEmbedding],
    repetitions: usize,
    direction: Direction,
    k: usize,
) -> Result<LatencyReport, EvalError> {
    if queries.is_empty() {
        return Err(EvalError::NoQueries);
    }
    if repetitions == 0 {
        return Err(EvalError::InvalidRepetitions);
    }
    for q in queries {
        std::hint::black_box(engine.search_embedding(q, direction, k)?);
    }
    let mut samples = Vec::with_capacity(queries.len() * repetitions);
    for _ in 0..repetitions {
        for q in queries {
            let start = Instant::now();
            let results = engine.search_embedding(q, direction, k)?;
            samples.push(start.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(results);
        }
    }
    LatencyReport::from_samples(direction, queries.len(), repetitions, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_three() {
        let r =
            LatencyReport::from_samples(Direction::TextToImage, 1, 3, &[1.0, 2.0, 6.0]).unwrap();
        assert_eq!(r.mean_ms, 3.0);
        assert_eq!(r.p50_ms, 2.0);
        assert_eq!(r.p95_ms, 6.0);
    }

    #[test]
    fn percentiles_ordered() {
        let samples: Vec<f64> = (0..97)
            .map(|i| ((i * 37) % 97) as f64 * 0.5 + 0.1)
            .collect();
        let r = LatencyReport::from_samples(Direction::ImageToText, 97, 1, &samples).unwrap();
        assert!(r.p50_ms <= r.p95_ms);
        assert!(r.mean_ms > 0.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(LatencyReport::from_samples(Direction::ImageToText, 0, 1, &[]).is_err());
    }
}
