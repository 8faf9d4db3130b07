//! Ranked results and bounded top-k selection shared by both retrievers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub id: String,
    pub score: f64,
}

/// Rank of every id in ascending lexicographic order; lower rank wins ties.
pub(crate) fn id_ranks(ids: &[String]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..ids.len() as u32).collect();
    order.sort_by(|&a, &b| ids[a as usize].cmp(&ids[b as usize]));
    let mut ranks = vec![0u32; ids.len()];
    for (rank, &ord) in order.iter().enumerate() {
        ranks[ord as usize] = rank as u32;
    }
    ranks
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    tie_rank: u32,
    ordinal: u32,
}

// Greater means worse, so the heap top is the weakest kept candidate.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then(self.tie_rank.cmp(&other.tie_rank))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

/// Keeps the best `k` (score descending, tie rank ascending) of a stream.
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, ordinal: u32, score: f64, tie_rank: u32) {
        let c = Candidate { score, tie_rank, ordinal };
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(mut top) = self.heap.peek_mut() {
            if c < *top {
                *top = c;
            }
        }
    }

    /// `(ordinal, score)` best first.
    pub fn into_sorted(self) -> Vec<(u32, f64)> {
        self.heap.into_sorted_vec().into_iter().map(|c| (c.ordinal, c.score)).collect()
    }
}
