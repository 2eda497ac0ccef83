use artsearch_core::scoring::{
    attention_weights, fuse, FusionConfig, Gallery, LocalAggregation, Modality, ScoreBreakdown,
    ScoreOptions,
};
use artsearch_core::store::Block;
use artsearch_oracle::rank_all;
use proptest::prelude::*;

use crate::fixtures;

#[derive(Debug, Clone)]
pub struct Case {
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
    pub regions: usize,
    pub cfg: FusionConfig,
    pub shards: usize,
    pub gram: bool,
}

pub fn fusion_config() -> impl Strategy<Value = FusionConfig> {
    (
        prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0f64..=1.0],
        prop_oneof![Just(9.0), 0.1f64..20.0],
        prop_oneof![
            Just(LocalAggregation::Mean),
            Just(LocalAggregation::LogSumExp)
        ],
    )
        .prop_map(
            |(alpha, temperature_lambda, local_aggregation)| FusionConfig {
                alpha,
                temperature_lambda,
                local_aggregation,
            },
        )
}

pub fn case(
    max_n: usize,
    dims: std::ops::RangeInclusive<usize>,
    max_regions: usize,
) -> impl Strategy<Value = Case> {
    (
        any::<u64>(),
        1..=max_n,
        dims,
        1..=max_regions,
        fusion_config(),
        1usize..=8,
        any::<bool>(),
    )
        .prop_map(|(seed, n, dim, regions, cfg, shards, gram)| Case {
            seed,
            n,
            dim,
            regions,
            cfg,
            shards,
            gram,
        })
}

struct Built {
    items: Vec<artsearch_oracle::Item>,
    queries: Vec<artsearch_oracle::Item>,
    gallery: Gallery,
}

fn build(c: &Case, query_count: usize) -> Built {
    let mut rng = fixtures::rng(c.seed);
    let items = fixtures::random_items(&mut rng, c.n, c.dim, c.regions);
    let queries = fixtures::random_items(&mut rng, query_count, c.dim, c.regions);
    let side = fixtures::side(&items, c.dim);
    let gallery = if c.gram {
        Gallery::new(side)
    } else {
        Gallery::without_gram_cache(side)
    };
    Built {
        items,
        queries,
        gallery,
    }
}

fn ids(r: &[ScoreBreakdown]) -> Vec<usize> {
    r.iter().map(|s| s.item_id).collect()
}

/// Full ranking equals the naive full-sort scorer's exactly; scores within
/// 1e-5.
pub fn oracle_ranking(c: Case) -> Result<(), TestCaseError> {
    let b = build(&c, 3);
    for q in &b.queries {
        let got = b
            .gallery
            .search(
                &fixtures::query(q, Modality::Text),
                &c.cfg,
                c.n,
                ScoreOptions { shards: c.shards },
            )
            .unwrap();
        let want = rank_all(q, &b.items, fixtures::params(&c.cfg));
        prop_assert_eq!(ids(&got), want.iter().map(|s| s.id).collect::<Vec<_>>());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g.global_score - w.global).abs() < 1e-5);
            prop_assert!((g.local_score - w.local).abs() < 1e-5);
            prop_assert!((g.fused_score - w.fused).abs() < 1e-5);
        }
    }
    Ok(())
}

/// Every global, local, and fused score lies in [-1-1e-6, 1+1e-6].
pub fn boundedness(c: Case) -> Result<(), TestCaseError> {
    let b = build(&c, 2);
    let inside = |x: f64| (-1.0 - 1e-6..=1.0 + 1e-6).contains(&x);
    for q in &b.queries {
        let r = b
            .gallery
            .search(
                &fixtures::query(q, Modality::Image),
                &c.cfg,
                c.n,
                ScoreOptions::default(),
            )
            .unwrap();
        for s in r {
            prop_assert!(inside(s.global_score), "{s:?}");
            prop_assert!(inside(s.local_score), "{s:?}");
            prop_assert!(inside(s.fused_score), "{s:?}");
        }
    }
    Ok(())
}

/// Attention weights of one query vector over a target block sum to 1.
pub fn attention_normalized(
    seed: u64,
    dim: usize,
    regions: usize,
    lambda: f64,
) -> Result<(), TestCaseError> {
    let mut rng = fixtures::rng(seed);
    let items = fixtures::random_items(&mut rng, 2, dim, regions);
    let targets = items[1].locals.concat();
    let w = attention_weights(
        &items[0].locals[0],
        Block::new(&targets, dim).unwrap(),
        lambda,
    )
    .unwrap();
    prop_assert_eq!(w.len(), items[1].locals.len());
    let sum: f64 = w.iter().sum();
    prop_assert!((sum - 1.0).abs() <= 1e-6, "sum {sum}");
    prop_assert!(w.iter().all(|&a| (0.0..=1.0).contains(&a)));
    Ok(())
}

/// At λ = 1e-9 every weight is within 1e-6 of 1/R.
pub fn near_zero_temperature_is_uniform(
    seed: u64,
    dim: usize,
    regions: usize,
) -> Result<(), TestCaseError> {
    let mut rng = fixtures::rng(seed);
    let items = fixtures::random_items(&mut rng, 2, dim, regions);
    let targets = items[1].locals.concat();
    let w = attention_weights(
        &items[0].locals[0],
        Block::new(&targets, dim).unwrap(),
        1e-9,
    )
    .unwrap();
    let uniform = 1.0 / w.len() as f64;
    prop_assert!(w.iter().all(|a| (a - uniform).abs() <= 1e-6), "{w:?}");
    Ok(())
}

/// Scaling the query's global and local vectors by `factor > 0` leaves the
/// returned order unchanged.
pub fn scale_invariance(c: Case, factor: f32) -> Result<(), TestCaseError> {
    let b = build(&c, 2);
    for q in &b.queries {
        let base = fixtures::query(q, Modality::Text);
        let scaled = base.scaled(factor).unwrap();
        let k = c.n;
        let a = b
            .gallery
            .search(&base, &c.cfg, k, ScoreOptions::default())
            .unwrap();
        let s = b
            .gallery
            .search(&scaled, &c.cfg, k, ScoreOptions::default())
            .unwrap();
        prop_assert_eq!(ids(&a), ids(&s));
    }
    Ok(())
}

fn sorted_ids(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// α = 1 ranks exactly as global similarity alone; α = 0 exactly as local
/// alignment alone.
pub fn alpha_degeneracy(c: Case) -> Result<(), TestCaseError> {
    let b = build(&c, 2);
    for q in &b.queries {
        let query = fixtures::query(q, Modality::Text);
        let global = b.gallery.global_scores(&query).unwrap();
        let local = b.gallery.local_scores(&query, &c.cfg).unwrap();

        let cfg1 = FusionConfig {
            alpha: 1.0,
            ..c.cfg
        };
        let r1 = b
            .gallery
            .search(&query, &cfg1, c.n, ScoreOptions::default())
            .unwrap();
        prop_assert_eq!(ids(&r1), sorted_ids(&global));
        prop_assert!(r1.iter().all(|s| s.fused_score == s.global_score));

        let cfg0 = FusionConfig {
            alpha: 0.0,
            ..c.cfg
        };
        let r0 = b
            .gallery
            .search(&query, &cfg0, c.n, ScoreOptions::default())
            .unwrap();
        prop_assert_eq!(ids(&r0), sorted_ids(&local));
        prop_assert!(r0.iter().all(|s| s.fused_score == s.local_score));
    }
    Ok(())
}

/// With the local score fixed, the fused score never decreases as the
/// global score grows, for α in (0, 1].
pub fn monotone_fusion(g1: f64, g2: f64, local: f64, alpha: f64) -> Result<(), TestCaseError> {
    let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
    prop_assert!(fuse(lo, local, alpha).unwrap() <= fuse(hi, local, alpha).unwrap());
    Ok(())
}

/// Shard count changes neither order nor a single score bit.
pub fn shard_determinism(c: Case) -> Result<(), TestCaseError> {
    let b = build(&c, 2);
    let k = (c.n / 2).max(1);
    for q in &b.queries {
        let query = fixtures::query(q, Modality::Text);
        let reference = b
            .gallery
            .search(&query, &c.cfg, k, ScoreOptions { shards: 1 })
            .unwrap();
        for shards in [2, 3, 8, 64] {
            let r = b
                .gallery
                .search(&query, &c.cfg, k, ScoreOptions { shards })
                .unwrap();
            prop_assert_eq!(&r, &reference);
        }
    }
    Ok(())
}

/// Cached-Gram and explicit-context local scoring agree.
pub fn gram_paths_agree(c: Case) -> Result<(), TestCaseError> {
    let mut rng = fixtures::rng(c.seed);
    let items = fixtures::random_items(&mut rng, c.n, c.dim, c.regions);
    let q = &fixtures::random_items(&mut rng, 1, c.dim, c.regions)[0];
    let with = Gallery::new(fixtures::side(&items, c.dim));
    let without = Gallery::without_gram_cache(fixtures::side(&items, c.dim));
    prop_assert!(with.has_gram_cache() && !without.has_gram_cache());
    let query = fixtures::query(q, Modality::Text);
    let a = with.local_scores(&query, &c.cfg).unwrap();
    let b = without.local_scores(&query, &c.cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        prop_assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
    Ok(())
}
