use std::cmp::Ordering;

/// Top-C truncated topic assignment for one token, kept as a size-C
/// min-heap keyed by weight. The root is the weakest stored entry.
///
/// Ties are broken toward the lower topic index: between two equal weights
/// the higher index is considered weaker and is evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKAssignment {
    cutoff: usize,
    heap: Vec<(usize, f64)>,
}

/// `Greater` when `a` should be kept in preference to `b`.
fn strength(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0))
}

impl TopKAssignment {
    pub fn new(cutoff: usize) -> Self {
        assert!(cutoff >= 1, "cutoff must be at least 1");
        Self { cutoff, heap: Vec::with_capacity(cutoff) }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Stored `(topic, weight)` pairs in heap order.
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.heap
    }

    /// Stored pairs ordered by topic index.
    pub fn sorted(&self) -> Vec<(usize, f64)> {
        let mut v = self.heap.clone();
        v.sort_unstable_by_key(|e| e.0);
        v
    }

    pub fn weight(&self, topic: usize) -> f64 {
        self.heap.iter().find(|e| e.0 == topic).map_or(0.0, |e| e.1)
    }

    pub fn total(&self) -> f64 {
        self.heap.iter().map(|e| e.1).sum()
    }

    /// Weakest stored entry.
    pub fn peek_min(&self) -> Option<(usize, f64)> {
        self.heap.first().copied()
    }

    /// Offers a candidate; keeps it if the heap has room or it beats the root.
    pub fn offer(&mut self, topic: usize, weight: f64) {
        let item = (topic, weight);
        if self.heap.len() < self.cutoff {
            self.heap.push(item);
            self.sift_up(self.heap.len() - 1);
        } else if strength(&item, &self.heap[0]) == Ordering::Greater {
            self.heap[0] = item;
            self.sift_down(0);
        }
    }

    /// Divides every stored weight by their sum.
    pub fn renormalize(&mut self) {
        let total = self.total();
        if total > 0.0 {
            for e in &mut self.heap {
                e.1 /= total;
            }
            // Division can merge distinct weights into ties; restore the order.
            for i in (0..self.heap.len() / 2).rev() {
                self.sift_down(i);
            }
        }
    }

    /// True when every parent is no stronger than its children.
    pub fn is_heap(&self) -> bool {
        (1..self.heap.len()).all(|i| strength(&self.heap[(i - 1) / 2], &self.heap[i]) != Ordering::Greater)
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if strength(&self.heap[i], &self.heap[parent]) == Ordering::Less {
                self.heap.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut weakest = i;
            if l < n && strength(&self.heap[l], &self.heap[weakest]) == Ordering::Less {
                weakest = l;
            }
            if r < n && strength(&self.heap[r], &self.heap[weakest]) == Ordering::Less {
                weakest = r;
            }
            if weakest == i {
                break;
            }
            self.heap.swap(i, weakest);
            i = weakest;
        }
    }
}

/// Keeps the `cutoff` largest of the given `(topic, weight)` pairs. When
/// anything is dropped the survivors are renormalized to sum to one;
/// otherwise the weights are stored untouched.
pub fn truncate_pairs(pairs: impl ExactSizeIterator<Item = (usize, f64)>, cutoff: usize) -> TopKAssignment {
    let truncating = pairs.len() > cutoff;
    let mut top = TopKAssignment::new(cutoff);
    for (k, w) in pairs {
        top.offer(k, w);
    }
    if truncating {
        top.renormalize();
    }
    top
}

/// Top-C truncation of a dense assignment over all topics.
pub fn topk_truncate(dense: &[f64], cutoff: usize) -> TopKAssignment {
    truncate_pairs(dense.iter().copied().enumerate(), cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renormalized_pair() {
        let t = topk_truncate(&[0.5, 0.3, 0.1, 0.1], 2);
        let s = t.sorted();
        assert_eq!((s[0].0, s[1].0), (0, 1));
        assert!((s[0].1 - 0.625).abs() < 1e-15 && (s[1].1 - 0.375).abs() < 1e-15);
    }

    #[test]
    fn full_cutoff_is_identity() {
        let dense = [0.1, 0.2, 0.3, 0.4];
        let t = topk_truncate(&dense, 4);
        let sorted: Vec<f64> = t.sorted().into_iter().map(|e| e.1).collect();
        assert_eq!(sorted, dense);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let t = topk_truncate(&[0.25, 0.25, 0.25, 0.25], 2);
        assert_eq!(t.sorted().iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(t.peek_min().unwrap().0, 1);
    }

    #[test]
    fn cutoff_one() {
        let t = topk_truncate(&[0.2, 0.5, 0.3], 1);
        assert_eq!(t.entries(), &[(1, 1.0)]);
    }

    fn simplex() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0u32..20, 1..24).prop_map(|raw| {
            // Coarse integer weights produce plenty of ties.
            let raw: Vec<f64> = raw.into_iter().map(|r| r as f64 + 1.0).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|r| r / s).collect()
        })
    }

    proptest! {
        #[test]
        fn matches_sort_oracle(dense in simplex(), cutoff in 1usize..24) {
            let t = topk_truncate(&dense, cutoff);
            let mut order: Vec<usize> = (0..dense.len()).collect();
            order.sort_by(|&a, &b| dense[b].total_cmp(&dense[a]).then(a.cmp(&b)));
            let mut expected: Vec<usize> = order.into_iter().take(cutoff).collect();
            expected.sort_unstable();
            let stored: Vec<usize> = t.sorted().into_iter().map(|e| e.0).collect();
            prop_assert_eq!(stored, expected);
            prop_assert!(t.len() <= cutoff);
            prop_assert!(t.is_heap());
            prop_assert!((t.total() - 1.0).abs() <= 1e-12);
        }
    }
}
