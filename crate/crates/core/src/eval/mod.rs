//! Evaluation protocol: dataset splits, Recall@K in both directions, query
//! latency, and a synthetic paired-corpus generator.

mod latency;
mod recall;
mod split;
mod synth;

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineError;
use crate::store::StoreError;

pub use latency::{latency_bench, LatencyReport};
pub use recall::{recall_at_k, RecallReport};
pub use split::{split_dataset, DatasetSplit, SplitSpec};
pub use synth::{
    generate_synthetic_corpus, load_pairs, synthetic_description, synthetic_image_bytes,
    write_synthetic_corpus, SynthParams, SyntheticCorpus, PAIRS_FILE, SERVICE_FILE,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("k values must be non-empty and positive")]
    InvalidK,
    #[error("repetitions must be at least 1")]
    InvalidRepetitions,
    #[error("item {0} is not in the stores")]
    MissingItem(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Which items form the ranked gallery during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GalleryMode {
    /// Only the test split; queries and candidates are both test items.
    Test,
    /// Test-split queries ranked against every item.
    Full,
}

/// Queries and ground-truth pairs for one evaluation gallery. For `Test`,
/// the caller restricts the corpus to `split.test` (in that order) and the
/// pairs are renumbered; for `Full` the original ids are kept.
pub fn evaluation_pairs(split: &DatasetSplit, mode: GalleryMode) -> Vec<(usize, usize)> {
    match mode {
        GalleryMode::Test => (0..split.test.len()).map(|i| (i, i)).collect(),
        GalleryMode::Full => split.test.iter().map(|&i| (i, i)).collect(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub recall: Vec<RecallReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub latency: Vec<LatencyReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<(), EvalError> {
        synth::write_json(path, self)
    }

    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if !self.recall.is_empty() {
            let ks: std::collections::BTreeSet<usize> = self
                .recall
                .iter()
                .flat_map(|r| r.k_values.iter().copied())
                .collect();
            let _ = write!(out, "{:<15} {:>8}", "direction", "queries");
            for k in &ks {
                let _ = write!(out, " {:>8}", format!("R@{k}"));
            }
            out.push('\n');
            for r in &self.recall {
                let _ = write!(out, "{:<15} {:>8}", r.direction.as_str(), r.query_count);
                for k in &ks {
                    match r.recall(*k) {
                        Some(v) => {
                            let _ = write!(out, " {v:>8.2}");
                        }
                        None => {
                            let _ = write!(out, " {:>8}", "-");
                        }
                    }
                }
                out.push('\n');
            }
        }
        if !self.latency.is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "{:<15} {:>8} {:>5} {:>10} {:>10} {:>10}",
                "direction", "queries", "reps", "mean_ms", "p50_ms", "p95_ms"
            );
            for l in &self.latency {
                let _ = writeln!(
                    out,
                    "{:<15} {:>8} {:>5} {:>10.3} {:>10.3} {:>10.3}",
                    l.direction.as_str(),
                    l.query_count,
                    l.repetitions,
                    l.mean_ms,
                    l.p50_ms,
                    l.p95_ms
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Direction;

    #[test]
    fn table_lists_every_direction() {
        let report = EvalReport {
            recall: vec![
                RecallReport::from_ranks(Direction::ImageToText, &[Some(1)], &[1, 5]).unwrap(),
                RecallReport::from_ranks(Direction::TextToImage, &[None], &[1, 5]).unwrap(),
            ],
            latency: vec![],
        };
        let t = report.to_table();
        assert!(t.contains("image-to-text"));
        assert!(t.contains("R@5"));
        assert!(t.contains("100.00"));
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn gallery_pairs() {
        let split = DatasetSplit {
            train: vec![0],
            val: vec![],
            test: vec![4, 2],
        };
        assert_eq!(
            evaluation_pairs(&split, GalleryMode::Test),
            vec![(0, 0), (1, 1)]
        );
        assert_eq!(
            evaluation_pairs(&split, GalleryMode::Full),
            vec![(4, 4), (2, 2)]
        );
    }
}
