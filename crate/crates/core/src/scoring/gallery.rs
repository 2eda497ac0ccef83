use std::ops::Range;

use rayon::prelude::*;

use super::local::{gram, score_item, LocalScratch, PreparedQueryLocals, TargetItem};
use super::rank::{merge_top_k, rank_top_k, TopK};
use super::similarity::{clamp_unit, cosine, dot, norm, note_degenerate};
use super::{fuse_unchecked, FusionConfig, QueryEmbedding, ScoreBreakdown, ScoringError};
use crate::store::{CorpusSide, EmbeddingMatrix};

/// Gram matrices are cached only while their total entry count stays under
/// this bound (128 MiB of f64).
const GRAM_CACHE_ENTRIES: usize = 1 << 24;

/// Execution knobs for a whole-corpus scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOptions {
    /// Number of contiguous corpus shards scored independently. `1` runs on
    /// the calling thread; larger values fan out over the rayon pool.
    pub shards: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { shards: 1 }
    }
}

impl ScoreOptions {
    pub fn parallel() -> Self {
        Self {
            shards: rayon::current_num_threads().max(1) * 4,
        }
    }
}

/// Scalar reference: cosine of `query_global` against every row.
pub fn global_scores(
    query_global: &[f32],
    corpus: &EmbeddingMatrix,
) -> Result<Vec<f64>, ScoringError> {
    if query_global.len() != corpus.dim() {
        return Err(ScoringError::DimMismatch {
            what: "global",
            expected: corpus.dim(),
            found: query_global.len(),
        });
    }
    corpus.rows().map(|r| cosine(query_global, r)).collect()
}

struct GramCache {
    offsets: Vec<usize>,
    values: Vec<f64>,
}

/// One side of the corpus prepared for repeated scans: row norms and, when
/// small enough, per-item Gram matrices of the local vectors.
pub struct Gallery {
    side: CorpusSide,
    global_norms: Vec<f64>,
    local_inv_norms: Vec<f64>,
    grams: Option<GramCache>,
}

impl Gallery {
    pub fn new(side: CorpusSide) -> Self {
        let entries: usize = side
            .local
            .offsets()
            .windows(2)
            .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
            .sum();
        Self::build(side, entries <= GRAM_CACHE_ENTRIES)
    }

    /// Skips the Gram cache; every scan rebuilds attended contexts.
    pub fn without_gram_cache(side: CorpusSide) -> Self {
        Self::build(side, false)
    }

    fn build(side: CorpusSide, cache_grams: bool) -> Self {
        let global_norms = side.global.rows().map(norm).collect();
        let local_inv_norms = side
            .local
            .values()
            .chunks_exact(side.local.dim())
            .map(|r| {
                let n = norm(r);
                if n > 0.0 {
                    1.0 / n
                } else {
                    0.0
                }
            })
            .collect();
        let grams = cache_grams.then(|| {
            let mut offsets = Vec::with_capacity(side.local.item_count() + 1);
            let mut values = Vec::new();
            offsets.push(0);
            for id in 0..side.local.item_count() {
                values.extend(gram(side.local.row(id).expect("id in range")));
                offsets.push(values.len());
            }
            GramCache { offsets, values }
        });
        Self {
            side,
            global_norms,
            local_inv_norms,
            grams,
        }
    }

    pub fn side(&self) -> &CorpusSide {
        &self.side
    }

    pub fn into_side(self) -> CorpusSide {
        self.side
    }

    pub fn len(&self) -> usize {
        self.side.item_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_gram_cache(&self) -> bool {
        self.grams.is_some()
    }

    fn check_dims(&self, query: &QueryEmbedding) -> Result<(), ScoringError> {
        if query.global_dim() != self.side.global.dim() {
            return Err(ScoringError::DimMismatch {
                what: "global",
                expected: self.side.global.dim(),
                found: query.global_dim(),
            });
        }
        if query.local_dim() != self.side.local.dim() {
            return Err(ScoringError::DimMismatch {
                what: "local",
                expected: self.side.local.dim(),
                found: query.local_dim(),
            });
        }
        Ok(())
    }

    #[inline]
    fn global_at(&self, q: &[f32], q_norm: f64, id: usize) -> f64 {
        let row = &self.side.global.values()[id * q.len()..(id + 1) * q.len()];
        let n = self.global_norms[id];
        if n == 0.0 {
            note_degenerate();
            return 0.0;
        }
        clamp_unit(dot(q, row) / (q_norm * n))
    }

    fn target(&self, id: usize) -> TargetItem<'_> {
        let offsets = self.side.local.offsets();
        TargetItem {
            block: self.side.local.row(id).expect("id in range"),
            inv_norms: &self.local_inv_norms[offsets[id]..offsets[id + 1]],
            gram: self
                .grams
                .as_ref()
                .map(|g| &g.values[g.offsets[id]..g.offsets[id + 1]]),
        }
    }

    /// Global cosine against every item. Bit-identical to [`global_scores`].
    pub fn global_scores(&self, query: &QueryEmbedding) -> Result<Vec<f64>, ScoringError> {
        self.check_dims(query)?;
        let q = query.global();
        let q_norm = norm(q);
        Ok((0..self.len())
            .map(|id| self.global_at(q, q_norm, id))
            .collect())
    }

    /// Local alignment score against every item.
    pub fn local_scores(
        &self,
        query: &QueryEmbedding,
        cfg: &FusionConfig,
    ) -> Result<Vec<f64>, ScoringError> {
        cfg.validate()?;
        self.check_dims(query)?;
        let prepared = PreparedQueryLocals::new(query.locals());
        let mut scratch = LocalScratch::default();
        Ok((0..self.len())
            .map(|id| score_item(&prepared, &self.target(id), cfg, &mut scratch))
            .collect())
    }

    /// Exhaustively scores every item and returns the top `k` by fused score
    /// (ties by ascending item id).
    pub fn search(
        &self,
        query: &QueryEmbedding,
        cfg: &FusionConfig,
        k: usize,
        opts: ScoreOptions,
    ) -> Result<Vec<ScoreBreakdown>, ScoringError> {
        cfg.validate()?;
        if k == 0 {
            return Err(ScoringError::InvalidK);
        }
        self.check_dims(query)?;
        let n = self.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let q = query.global();
        let q_norm = norm(q);
        let prepared = PreparedQueryLocals::new(query.locals());
        let k = k.min(n);
        let shards = shard_ranges(n, opts.shards);

        if cfg.alpha == 1.0 {
            // Local scores cannot change the order; compute them for the
            // winners only.
            let global: Vec<f64> = if shards.len() == 1 {
                (0..n).map(|id| self.global_at(q, q_norm, id)).collect()
            } else {
                shards
                    .par_iter()
                    .flat_map_iter(|r| r.clone().map(|id| self.global_at(q, q_norm, id)))
                    .collect()
            };
            let mut scratch = LocalScratch::default();
            return Ok(rank_top_k(&global, k)?
                .into_iter()
                .map(|(id, g)| {
                    let l = score_item(&prepared, &self.target(id), cfg, &mut scratch);
                    ScoreBreakdown {
                        item_id: id,
                        global_score: g,
                        local_score: l,
                        fused_score: fuse_unchecked(g, l, cfg.alpha),
                    }
                })
                .collect());
        }

        let scan = |range: &Range<usize>| {
            let mut scratch = LocalScratch::default();
            let mut top = TopK::new(k);
            for id in range.clone() {
                let g = self.global_at(q, q_norm, id);
                let l = score_item(&prepared, &self.target(id), cfg, &mut scratch);
                top.push(id, fuse_unchecked(g, l, cfg.alpha), (g, l));
            }
            top.into_sorted()
        };
        let merged = if shards.len() == 1 {
            scan(&shards[0])
        } else {
            merge_top_k(shards.par_iter().map(scan).collect(), k)
        };
        Ok(merged
            .into_iter()
            .map(|(id, fused, (g, l))| ScoreBreakdown {
                item_id: id,
                global_score: g,
                local_score: l,
                fused_score: fused,
            })
            .collect())
    }
}

fn shard_ranges(n: usize, shards: usize) -> Vec<Range<usize>> {
    let shards = shards.clamp(1, n.max(1));
    let size = n.div_ceil(shards);
    (0..shards)
        .map(|s| (s * size).min(n)..((s + 1) * size).min(n))
        .filter(|r| !r.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Modality;
    use crate::store::LocalEmbeddingSet;

    fn side(rows: &[Vec<f32>], locals: &[Vec<f32>], dim: usize) -> CorpusSide {
        let (g, _) = EmbeddingMatrix::from_rows(dim, rows)
            .unwrap()
            .normalize_rows();
        CorpusSide::new(g, LocalEmbeddingSet::from_blocks(dim, locals).unwrap()).unwrap()
    }

    #[test]
    fn three_item_global_example() {
        let s = 0.5f32.sqrt();
        let gal = Gallery::new(side(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![s, s]],
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![s, s]],
            2,
        ));
        let q = QueryEmbedding::new(Modality::Text, vec![1.0, 0.0], vec![1.0, 0.0], 2).unwrap();
        let g = gal.global_scores(&q).unwrap();
        for (got, want) in g.iter().zip([1.0, 0.0, std::f64::consts::FRAC_1_SQRT_2]) {
            assert!((got - want).abs() < 1e-5);
        }
        let reference = global_scores(q.global(), &gal.side().global).unwrap();
        assert_eq!(g, reference);
    }

    #[test]
    fn empty_gallery() {
        let gal = Gallery::new(
            CorpusSide::new(
                EmbeddingMatrix::empty(2).unwrap(),
                LocalEmbeddingSet::empty(2).unwrap(),
            )
            .unwrap(),
        );
        let q = QueryEmbedding::new(Modality::Text, vec![1.0, 0.0], vec![1.0, 0.0], 2).unwrap();
        assert!(gal.global_scores(&q).unwrap().is_empty());
        assert!(gal
            .search(&q, &FusionConfig::default(), 5, ScoreOptions::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn dim_mismatch_reported() {
        let gal = Gallery::new(side(&[vec![1.0, 0.0]], &[vec![1.0, 0.0]], 2));
        let q =
            QueryEmbedding::new(Modality::Text, vec![1.0, 0.0, 0.0], vec![1.0, 0.0], 2).unwrap();
        assert!(matches!(
            gal.search(&q, &FusionConfig::default(), 1, ScoreOptions::default()),
            Err(ScoringError::DimMismatch { what: "global", .. })
        ));
    }

    #[test]
    fn self_retrieval_single_item() {
        // orthogonal locals, so each attends almost entirely to its twin
        let gal = Gallery::new(side(&[vec![0.6, 0.8]], &[vec![0.6, 0.8, -0.8, 0.6]], 2));
        let q = QueryEmbedding::new(Modality::Text, vec![0.6, 0.8], vec![0.6, 0.8, -0.8, 0.6], 2)
            .unwrap();
        let r = gal
            .search(&q, &FusionConfig::default(), 1, ScoreOptions::default())
            .unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].fused_score - 1.0).abs() < 1e-4, "{:?}", r[0]);
    }

    #[test]
    fn shards_cover_range() {
        for n in [1, 7, 100] {
            for s in [1, 3, 8, 200] {
                let r = shard_ranges(n, s);
                assert_eq!(r.first().unwrap().start, 0);
                assert_eq!(r.last().unwrap().end, n);
                assert!(r.windows(2).all(|w| w[0].end == w[1].start));
            }
        }
    }
}
