use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{DocOrdinal, PathTag, RankedList, ScoredHit};

/// Worst-at-root entry so the heap root is the current k-th best.
#[derive(Clone, Copy)]
struct Entry(ScoredHit);

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // Better hits compare Less, so the max-heap root is the worst kept hit.
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Bounded collector keeping the best `k` hits under the global order.
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Entry>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.saturating_add(1).min(1 << 16)),
        }
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// Score of the current k-th hit, or `None` while fewer than `k` are held.
    pub fn threshold(&self) -> Option<f64> {
        if self.is_full() {
            self.heap.peek().map(|e| e.0.score)
        } else {
            None
        }
    }

    pub fn push(&mut self, doc: DocOrdinal, score: f64) {
        if self.k == 0 {
            return;
        }
        let hit = Entry(ScoredHit::new(doc, score));
        if self.heap.len() < self.k {
            self.heap.push(hit);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if hit < *worst {
                *worst = hit;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn into_ranked(self, path: PathTag) -> RankedList {
        let mut hits: Vec<ScoredHit> = self.heap.into_iter().map(|e| e.0).collect();
        hits.sort_by(ScoredHit::rank_cmp);
        RankedList { path, hits }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_best_with_ordinal_tie_break() {
        let mut top = TopK::new(2);
        top.push(DocOrdinal(5), 1.0);
        top.push(DocOrdinal(2), 1.0);
        top.push(DocOrdinal(9), 0.5);
        top.push(DocOrdinal(1), 1.0);
        assert_eq!(top.threshold(), Some(1.0));
        let list = top.into_ranked(PathTag::Fts);
        assert_eq!(list.docs(), vec![DocOrdinal(1), DocOrdinal(2)]);
    }

    #[test]
    fn zero_k_collects_nothing() {
        let mut top = TopK::new(0);
        top.push(DocOrdinal(0), 1.0);
        assert!(top.is_empty());
        assert!(top.is_full());
    }
}
