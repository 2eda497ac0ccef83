use super::similarity::{clamp_unit, cosine, dot, inv_norm, norm, note_degenerate};
use super::{FusionConfig, LocalAggregation, ScoringError};
use crate::store::Block;

/// Numerically stable softmax of `lambda * x` written into `out`.
pub(crate) fn softmax_scaled(x: &[f64], lambda: f64, out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (lambda * (v - max)).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Attention weights of one query vector over a block of target vectors:
/// softmax over targets of `lambda * cosine(query, target)`.
pub fn attention_weights(
    query: &[f32],
    targets: Block<'_>,
    lambda: f64,
) -> Result<Vec<f64>, ScoringError> {
    if targets.is_empty() {
        return Err(ScoringError::EmptyBlock);
    }
    let sims = targets
        .rows()
        .map(|r| cosine(query, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut w = vec![0.0; sims.len()];
    softmax_scaled(&sims, lambda, &mut w);
    Ok(w)
}

pub(crate) fn aggregate(scores: &[f64], how: LocalAggregation, lambda: f64) -> f64 {
    let n = scores.len() as f64;
    let pooled = match how {
        LocalAggregation::Mean => scores.iter().sum::<f64>() / n,
        LocalAggregation::LogSumExp => {
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean_exp = scores
                .iter()
                .map(|s| (lambda * (s - max)).exp())
                .sum::<f64>()
                / n;
            max + mean_exp.ln() / lambda
        }
    };
    clamp_unit(pooled)
}

/// Local alignment between two blocks. Each query vector attends over the
/// target vectors, and the cosine between it and its attended context is
/// pooled across query vectors per `cfg.local_aggregation`.
///
/// This is the direct form; [`super::Gallery`] computes the same quantity
/// with precomputed norms for whole-corpus scans.
pub fn local_alignment_score(
    query_locals: Block<'_>,
    target_locals: Block<'_>,
    cfg: &FusionConfig,
) -> Result<f64, ScoringError> {
    cfg.validate()?;
    if query_locals.is_empty() || target_locals.is_empty() {
        return Err(ScoringError::EmptyBlock);
    }
    if query_locals.dim() != target_locals.dim() {
        return Err(ScoringError::DimMismatch {
            what: "local",
            expected: target_locals.dim(),
            found: query_locals.dim(),
        });
    }
    let dim = target_locals.dim();
    let mut context = vec![0f64; dim];
    let mut per_vector = Vec::with_capacity(query_locals.len());
    for t in query_locals.rows() {
        let weights = attention_weights(t, target_locals, cfg.temperature_lambda)?;
        context.iter_mut().for_each(|c| *c = 0.0);
        for (a, r) in weights.iter().zip(target_locals.rows()) {
            for (c, &x) in context.iter_mut().zip(r) {
                *c += a * f64::from(x);
            }
        }
        let t_norm = norm(t);
        let c_norm = context.iter().map(|c| c * c).sum::<f64>().sqrt();
        per_vector.push(if t_norm > 0.0 && c_norm > 0.0 {
            let tc: f64 = t.iter().zip(&context).map(|(&x, c)| f64::from(x) * c).sum();
            clamp_unit(tc / (t_norm * c_norm))
        } else {
            note_degenerate();
            0.0
        });
    }
    Ok(aggregate(
        &per_vector,
        cfg.local_aggregation,
        cfg.temperature_lambda,
    ))
}

/// Query-side state reused across every item of a scan: the local vectors
/// scaled to unit length.
/// Query locals with their inverse norms precomputed. Rows stay in their
/// original f32 form; scaling happens on the f64 dot products so no rounding
/// is introduced before accumulation.
pub(crate) struct PreparedQueryLocals<'a> {
    block: Block<'a>,
    inv_norms: Vec<f64>,
}

impl<'a> PreparedQueryLocals<'a> {
    pub(crate) fn new(block: Block<'a>) -> Self {
        Self {
            inv_norms: block.rows().map(inv_norm).collect(),
            block,
        }
    }
}

#[derive(Default)]
pub(crate) struct LocalScratch {
    raw: Vec<f64>,
    sims: Vec<f64>,
    weights: Vec<f64>,
    context: Vec<f64>,
    per_vector: Vec<f64>,
}

/// Target-side data for one item.
/// Below this ratio of ‖c‖² to the sum of absolute Gram terms, the cached
/// path would lose more than about 1e-14 relative precision.
const GRAM_CANCELLATION: f64 = 1e-2;

pub(crate) struct TargetItem<'a> {
    pub block: Block<'a>,
    /// `1 / ‖r_j‖` per target vector (0 for zero vectors).
    pub inv_norms: &'a [f64],
    /// Row-major `R_t × R_t` Gram matrix of the target vectors, if cached.
    pub gram: Option<&'a [f64]>,
}

/// Fast path equivalent to [`local_alignment_score`].
///
/// With unit query vectors `q_i`, raw dots `d_ij = q_i · r_j`, and weights
/// `a_ij`, the context dot is `q_i · c_i = Σ_j a_ij d_ij`, so only `‖c_i‖`
/// needs the context itself (or the cached Gram matrix).
pub(crate) fn score_item(
    query: &PreparedQueryLocals<'_>,
    target: &TargetItem<'_>,
    cfg: &FusionConfig,
    scratch: &mut LocalScratch,
) -> f64 {
    let rt = target.block.len();
    let dim = query.block.dim();
    scratch.raw.resize(rt, 0.0);
    scratch.sims.resize(rt, 0.0);
    scratch.weights.resize(rt, 0.0);
    scratch.per_vector.clear();
    scratch.context.resize(dim, 0.0);

    for (q, &q_inv) in query.block.rows().zip(&query.inv_norms) {
        for (j, r) in target.block.rows().enumerate() {
            let d = dot(q, r) * q_inv;
            scratch.raw[j] = d;
            scratch.sims[j] = d * target.inv_norms[j];
        }
        softmax_scaled(&scratch.sims, cfg.temperature_lambda, &mut scratch.weights);
        let w = &scratch.weights;
        let ctx_dot: f64 = w.iter().zip(&scratch.raw).map(|(a, d)| a * d).sum();

        // ‖c‖² = wᵀGw from the cached Gram matrix, unless the terms nearly
        // cancel (e.g. opposing local vectors); then rounding dominates and
        // the context vector is built explicitly instead.
        let from_gram = target.gram.and_then(|gram| {
            let (mut s, mut magnitude) = (0.0, 0.0);
            for j in 0..rt {
                let row = &gram[j * rt..(j + 1) * rt];
                let (mut inner, mut inner_abs) = (0.0, 0.0);
                for (g, a) in row.iter().zip(w) {
                    inner += g * a;
                    inner_abs += (g * a).abs();
                }
                s += w[j] * inner;
                magnitude += w[j] * inner_abs;
            }
            (s >= GRAM_CANCELLATION * magnitude).then_some(s)
        });
        let ctx_norm_sq = match from_gram {
            Some(s) => s,
            None => {
                let ctx = &mut scratch.context;
                ctx.iter_mut().for_each(|c| *c = 0.0);
                for (a, r) in w.iter().zip(target.block.rows()) {
                    for (c, &x) in ctx.iter_mut().zip(r) {
                        *c += a * f64::from(x);
                    }
                }
                ctx.iter().map(|c| c * c).sum()
            }
        };
        let s = if ctx_norm_sq > 0.0 && q_inv != 0.0 {
            clamp_unit(ctx_dot / ctx_norm_sq.sqrt())
        } else {
            note_degenerate();
            0.0
        };
        scratch.per_vector.push(s);
    }
    aggregate(
        &scratch.per_vector,
        cfg.local_aggregation,
        cfg.temperature_lambda,
    )
}

/// Row-major Gram matrix of a block.
pub(crate) fn gram(block: Block<'_>) -> Vec<f64> {
    let n = block.len();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let d = dot(block.row(i), block.row(j));
            g[i * n + j] = d;
            g[j * n + i] = d;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(data: &[f32], dim: usize) -> Block<'_> {
        Block::new(data, dim).unwrap()
    }

    #[test]
    fn identical_single_vectors() {
        let v = [1.0, 0.0];
        let s =
            local_alignment_score(block(&v, 2), block(&v, 2), &FusionConfig::default()).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_single_target() {
        let s = local_alignment_score(
            block(&[1.0, 0.0], 2),
            block(&[0.0, 1.0], 2),
            &FusionConfig::default(),
        )
        .unwrap();
        assert_eq!(s, 0.0);
    }

    // Frozen from a standalone numpy computation:
    // w = softmax([9, 0]); c = w[0]*e1 + w[1]*e2; c[0] / |c| = 0.9999999923850103
    #[test]
    fn two_targets_lambda_nine() {
        let s = local_alignment_score(
            block(&[1.0, 0.0], 2),
            block(&[1.0, 0.0, 0.0, 1.0], 2),
            &FusionConfig::default(),
        )
        .unwrap();
        assert!((s - 0.999_999_992_385_010_3).abs() < 1e-9, "{s}");
        let w = attention_weights(&[1.0, 0.0], block(&[1.0, 0.0, 0.0, 1.0], 2), 9.0).unwrap();
        assert!((w[0] - 9.998_766_05e-1).abs() < 1e-9);
        assert!((w[1] - 1.233_945_76e-4).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let cfg = FusionConfig::default();
        assert!(matches!(
            local_alignment_score(block(&[1.0, 0.0], 2), block(&[1.0], 1), &cfg),
            Err(ScoringError::DimMismatch { .. })
        ));
        assert!(matches!(
            local_alignment_score(block(&[], 2), block(&[1.0, 0.0], 2), &cfg),
            Err(ScoringError::EmptyBlock)
        ));
    }

    #[test]
    fn lse_is_bounded_by_extremes() {
        let s = [0.2, -0.3, 0.9];
        let v = aggregate(&s, LocalAggregation::LogSumExp, 9.0);
        assert!((-0.3..=0.9).contains(&v));
        assert!(v > aggregate(&s, LocalAggregation::Mean, 9.0));
    }

    #[test]
    fn fast_path_matches_direct_form() {
        let q = [0.3, -1.0, 0.5, 0.2, 0.9, -0.4];
        let t = [1.0, 0.5, -0.2, 0.0, 0.7, 0.7, -1.0, 0.1, 0.3, 0.0, 0.0, 0.0];
        let tb = block(&t, 3);
        let inv: Vec<f64> = tb.rows().map(inv_norm).collect();
        let g = gram(tb);
        for agg in [LocalAggregation::Mean, LocalAggregation::LogSumExp] {
            let cfg = FusionConfig {
                local_aggregation: agg,
                temperature_lambda: 4.0,
                ..FusionConfig::default()
            };
            let direct = local_alignment_score(block(&q, 3), tb, &cfg).unwrap();
            let prepared = PreparedQueryLocals::new(block(&q, 3));
            let mut scratch = LocalScratch::default();
            for cached in [None, Some(g.as_slice())] {
                let item = TargetItem {
                    block: tb,
                    inv_norms: &inv,
                    gram: cached,
                };
                let fast = score_item(&prepared, &item, &cfg, &mut scratch);
                assert!((fast - direct).abs() < 1e-6, "{fast} vs {direct}");
            }
        }
    }
}
