use super::{term_score, FtsIndex, PostingList};
use crate::model::{DocOrdinal, PathTag, RankedList, TopK};

/// Work counters for one top-k evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FtsStats {
    /// Postings whose BM25 contribution was computed.
    pub postings_scored: u64,
    /// Postings an exhaustive evaluation of the same query would score.
    pub postings_total: u64,
    pub docs_scored: u64,
}

/// Slack applied to upper bounds so floating-point rounding can never prune
/// a document whose exact score reaches the threshold.
const BOUND_SLACK: f64 = 1.0 + 1e-9;

struct Cursor<'a> {
    list: &'a PostingList,
    slot: usize,
    weight: f64,
    max_score: f64,
    pos: usize,
    block: usize,
}

impl Cursor<'_> {
    #[inline]
    fn doc(&self) -> u32 {
        self.list.docs.get(self.pos).copied().unwrap_or(u32::MAX)
    }

    #[inline]
    fn exhausted(&self) -> bool {
        self.pos >= self.list.docs.len()
    }

    /// Moves the block pointer (not the posting pointer) to the block that
    /// would hold `target`.
    fn seek_block(&mut self, target: u32, block_size: usize) {
        self.block = self.block.max(self.pos / block_size);
        while self.block < self.list.blocks.len() && self.list.blocks[self.block].last_doc < target
        {
            self.block += 1;
        }
    }

    fn block_max(&self) -> f64 {
        self.list
            .blocks
            .get(self.block)
            .map_or(0.0, |b| self.weight * b.max_score)
    }

    fn block_last_doc(&self) -> u32 {
        self.list.blocks.get(self.block).map_or(u32::MAX, |b| b.last_doc)
    }

    /// Advances to the first posting with doc >= `target`.
    fn next_geq(&mut self, target: u32, block_size: usize) {
        if self.doc() >= target {
            return;
        }
        self.seek_block(target, block_size);
        if self.block >= self.list.blocks.len() {
            self.pos = self.list.docs.len();
            return;
        }
        let start = self.pos.max(self.block * block_size);
        let end = ((self.block + 1) * block_size).min(self.list.docs.len());
        let offset = self.list.docs[start..end].partition_point(|&d| d < target);
        self.pos = start + offset;
    }
}

pub(super) fn block_max_wand(
    index: &FtsIndex,
    query_terms: &[String],
    k: usize,
) -> (RankedList, FtsStats) {
    let bs = index.block_size;
    let k1 = index.params.k1;
    let mut stats = FtsStats::default();
    let mut top = TopK::new(k);
    if k == 0 {
        return (top.into_ranked(PathTag::Fts), stats);
    }
    let mut cursors: Vec<Cursor<'_>> = index
        .query_terms(query_terms)
        .into_iter()
        .enumerate()
        .map(|(slot, (list, weight))| {
            stats.postings_total += list.docs.len() as u64;
            Cursor {
                list,
                slot,
                weight,
                max_score: weight * list.max_score(),
                pos: 0,
                block: 0,
            }
        })
        .collect();
    let mut contributions: Vec<(usize, f64)> = Vec::with_capacity(cursors.len());

    loop {
        cursors.retain(|c| !c.exhausted());
        if cursors.is_empty() {
            break;
        }
        cursors.sort_by_key(|c| c.doc());
        let threshold = top.threshold().unwrap_or(f64::NEG_INFINITY);

        let mut acc = 0.0;
        let mut pivot = None;
        for (i, c) in cursors.iter().enumerate() {
            acc += c.max_score;
            if acc * BOUND_SLACK > threshold {
                pivot = Some(i);
                break;
            }
        }
        let Some(mut pivot) = pivot else { break };
        let pivot_doc = cursors[pivot].doc();
        while pivot + 1 < cursors.len() && cursors[pivot + 1].doc() == pivot_doc {
            pivot += 1;
        }

        let mut block_bound = 0.0;
        for c in &mut cursors[..=pivot] {
            c.seek_block(pivot_doc, bs);
            block_bound += c.block_max();
        }

        if block_bound * BOUND_SLACK > threshold {
            if cursors[0].doc() == pivot_doc {
                let norm = index.length_norm[pivot_doc as usize];
                contributions.clear();
                for c in &mut cursors[..=pivot] {
                    let tf = c.list.tfs[c.pos];
                    contributions.push((c.slot, c.weight * term_score(c.list.idf, tf, norm, k1)));
                    c.pos += 1;
                }
                // Sum in query-term order so equal documents get bit-equal scores.
                contributions.sort_unstable_by_key(|&(slot, _)| slot);
                let score: f64 = contributions.iter().map(|&(_, s)| s).sum();
                stats.postings_scored += contributions.len() as u64;
                stats.docs_scored += 1;
                top.push(DocOrdinal(pivot_doc), score);
            } else {
                for c in &mut cursors[..pivot] {
                    c.next_geq(pivot_doc, bs);
                }
            }
        } else {
            let mut next = cursors[..=pivot]
                .iter()
                .map(|c| c.block_last_doc().saturating_add(1))
                .min()
                .unwrap_or(u32::MAX);
            if let Some(c) = cursors.get(pivot + 1) {
                next = next.min(c.doc());
            }
            for c in &mut cursors[..=pivot] {
                if next == u32::MAX {
                    c.pos = c.list.docs.len();
                } else {
                    c.next_geq(next, bs);
                }
            }
        }
    }
    (top.into_ranked(PathTag::Fts), stats)
}
