use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::ScoringError;

/// Result order: higher score first, then lower item id. Adding 0.0 folds
/// -0.0 into +0.0 so the two tie instead of splitting under `total_cmp`.
#[inline]
pub(crate) fn result_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    (b.1 + 0.0).total_cmp(&(a.1 + 0.0)).then(a.0.cmp(&b.0))
}

/// Heap entry ordered so the worst kept candidate sits on top.
struct Candidate<T> {
    id: usize,
    score: f64,
    payload: T,
}

impl<T> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T> Eq for Candidate<T> {}
impl<T> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        result_order((self.id, self.score), (other.id, other.score))
    }
}

/// Bounded selection of the `k` best `(id, score)` pairs, carrying an
/// arbitrary payload with each.
pub struct TopK<T = ()> {
    k: usize,
    heap: BinaryHeap<Candidate<T>>,
}

impl<T> TopK<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.saturating_add(1).min(1 << 16)),
        }
    }

    pub fn push(&mut self, id: usize, score: f64, payload: T) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(Candidate { id, score, payload });
            return;
        }
        let worst = self.heap.peek().expect("heap is full");
        if result_order((id, score), (worst.id, worst.score)) == Ordering::Less {
            self.heap.pop();
            self.heap.push(Candidate { id, score, payload });
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Best first.
    pub fn into_sorted(self) -> Vec<(usize, f64, T)> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| (c.id, c.score, c.payload))
            .collect()
    }
}

/// The `min(k, N)` highest scores, descending, ties broken by ascending id.
pub fn rank_top_k(scores: &[f64], k: usize) -> Result<Vec<(usize, f64)>, ScoringError> {
    if k == 0 {
        return Err(ScoringError::InvalidK);
    }
    let mut top = TopK::new(k.min(scores.len()));
    for (id, &s) in scores.iter().enumerate() {
        top.push(id, s, ());
    }
    Ok(top
        .into_sorted()
        .into_iter()
        .map(|(id, s, _)| (id, s))
        .collect())
}

/// Merges per-shard sorted lists into one top-`k` list under the same order.
pub fn merge_top_k<T>(shards: Vec<Vec<(usize, f64, T)>>, k: usize) -> Vec<(usize, f64, T)> {
    let mut top = TopK::new(k);
    for (id, s, p) in shards.into_iter().flatten() {
        top.push(id, s, p);
    }
    top.into_sorted()
}
