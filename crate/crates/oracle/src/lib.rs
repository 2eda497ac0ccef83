//! Deliberately naive reference implementations for tests.
//!
//! Everything here is written straight from the scoring definitions with
//! plain loops and a full sort: no sharding, no heaps, no cached norms or
//! Gram matrices. It shares no code with the engine.

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub global: Vec<f32>,
    pub locals: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub alpha: f64,
    pub lambda: f64,
    pub log_sum_exp: bool,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda: 9.0,
            log_sum_exp: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub id: usize,
    pub global: f64,
    pub local: f64,
    pub fused: f64,
}

fn cosine64(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    cosine64(&widen(a), &widen(b))
}

/// Softmax over `lambda * cosine(t, v_j)` for each target vector.
pub fn attention(t: &[f32], targets: &[Vec<f32>], lambda: f64) -> Vec<f64> {
    let logits: Vec<f64> = targets.iter().map(|v| lambda * cosine(t, v)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Each query vector attends over the target vectors; its score is the
/// cosine to the attended context. Scores are pooled by mean or by
/// `(1/λ) ln(mean exp(λ s))`.
pub fn local_score(query: &[Vec<f32>], targets: &[Vec<f32>], p: Params) -> f64 {
    let dim = targets[0].len();
    let mut per_vector = Vec::new();
    for t in query {
        let a = attention(t, targets, p.lambda);
        let mut context = vec![0.0f64; dim];
        for (j, v) in targets.iter().enumerate() {
            for d in 0..dim {
                context[d] += a[j] * v[d] as f64;
            }
        }
        per_vector.push(cosine64(&widen(t), &context));
    }
    let n = per_vector.len() as f64;
    if p.log_sum_exp {
        let m = per_vector.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean: f64 = per_vector
            .iter()
            .map(|s| (p.lambda * (s - m)).exp())
            .sum::<f64>()
            / n;
        m + mean.ln() / p.lambda
    } else {
        per_vector.iter().sum::<f64>() / n
    }
}

/// Scores every gallery item and sorts by fused score descending, ties by
/// ascending id.
pub fn rank_all(query: &Item, gallery: &[Item], p: Params) -> Vec<Scored> {
    let mut all: Vec<Scored> = gallery
        .iter()
        .enumerate()
        .map(|(id, item)| {
            let global = cosine(&query.global, &item.global);
            let local = local_score(&query.locals, &item.locals, p);
            Scored {
                id,
                global,
                local,
                fused: p.alpha * global + (1.0 - p.alpha) * local,
            }
        })
        .collect();
    all.sort_by(|a, b| {
        b.fused
            .partial_cmp(&a.fused)
            .expect("finite scores")
            .then(a.id.cmp(&b.id))
    });
    all
}

/// 1-based rank of `relevant` in the full ordering.
pub fn rank_of(query: &Item, gallery: &[Item], relevant: usize, p: Params) -> usize {
    rank_all(query, gallery, p)
        .iter()
        .position(|s| s.id == relevant)
        .expect("relevant item is in the gallery")
        + 1
}

/// Percentage of ranks within each cutoff.
pub fn recall(ranks: &[usize], ks: &[usize]) -> Vec<(usize, f64)> {
    ks.iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|&&r| r <= k).count();
            (k, hits as f64 * 100.0 / ranks.len() as f64)
        })
        .collect()
}
