use std::sync::atomic::{AtomicU64, Ordering};

use super::ScoringError;

static DEGENERATE_INPUTS: AtomicU64 = AtomicU64::new(0);

/// Number of cosine evaluations so far that hit a zero-norm input.
pub fn degenerate_input_count() -> u64 {
    DEGENERATE_INPUTS.load(Ordering::Relaxed)
}

pub(crate) fn note_degenerate() {
    DEGENERATE_INPUTS.fetch_add(1, Ordering::Relaxed);
}

const LANES: usize = 8;

/// Dot product of float32 vectors with float64 accumulation. The summation
/// order is fixed, so results are reproducible bit for bit.
///
/// Panics if the lengths differ.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    let mut acc = [0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += f64::from(x[i]) * f64::from(y[i]);
        }
    }
    let mut tail = 0.0;
    for (x, y) in ta.iter().zip(tb) {
        tail += f64::from(*x) * f64::from(*y);
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// `1 / ‖a‖`, or 0 for the zero vector.
#[inline]
pub(crate) fn inv_norm(a: &[f32]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        1.0 / n
    } else {
        0.0
    }
}

/// Clamps a cosine into [-1, 1] against rounding drift.
#[inline]
pub(crate) fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Cosine similarity. Zero-norm inputs yield 0.0 and bump the degenerate
/// input counter.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, ScoringError> {
    if u.len() != v.len() {
        return Err(ScoringError::DimMismatch {
            what: "vector",
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        note_degenerate();
        return Ok(0.0);
    }
    Ok(clamp_unit(dot(u, v) / (nu * nv)))
}
