use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Scorer;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopK {
    /// Best first.
    pub items: Vec<u32>,
    /// Fewer than `k` candidates were available.
    pub truncated: bool,
}

/// Heap entry ordered so that the *worst* candidate sits at the top.
#[derive(Clone, Copy)]
struct Entry {
    score: f32,
    item: u32,
}

impl Entry {
    /// Higher score wins; equal scores go to the smaller id.
    fn better(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.item.cmp(&self.item))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.better(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the worst entry is on top.
        other.better(self)
    }
}

/// The `k` highest-scoring items not in `exclude` (sorted ascending), ties by
/// ascending item id.
pub fn top_k(scores: &[f32], k: usize, exclude: &[u32]) -> TopK {
    let mut heap = BinaryHeap::with_capacity(k + 1);
    let mut skip = exclude.iter().peekable();
    let mut available = 0usize;
    for (i, &score) in scores.iter().enumerate() {
        let item = i as u32;
        while skip.next_if(|&&x| x < item).is_some() {}
        if skip.next_if_eq(&&item).is_some() {
            continue;
        }
        available += 1;
        if k == 0 {
            continue;
        }
        let e = Entry { score, item };
        if heap.len() < k {
            heap.push(e);
        } else if let Some(worst) = heap.peek() {
            if e.better(worst) == Ordering::Greater {
                heap.pop();
                heap.push(e);
            }
        }
    }
    // into_sorted_vec is ascending in heap order, i.e. best first here
    let items = heap.into_sorted_vec().into_iter().map(|e| e.item).collect();
    TopK {
        items,
        truncated: available < k,
    }
}

pub fn top_k_for_user<S: Scorer + ?Sized>(scorer: &S, u: u32, k: usize, exclude: &[u32]) -> TopK {
    let mut scores = vec![0f32; scorer.num_items()];
    scorer.score_user(u, &mut scores);
    top_k(&scores, k, exclude)
}
