//! Fenwick tree over f64 weights with prefix-sum sampling.
//!
//! Backs the rate tables of the event-driven engines: set a slot's rate,
//! read the total, and locate the slot containing a uniform point of the
//! cumulative mass in O(log n). Weights are kept exactly in a side array and
//! the tree is rebuilt periodically so float drift from incremental deltas
//! cannot accumulate.

#[derive(Debug, Clone)]
pub(crate) struct Fenwick {
    tree: Vec<f64>,
    weights: Vec<f64>,
    ops_since_rebuild: usize,
}

const REBUILD_EVERY: usize = 1 << 17;

impl Fenwick {
    pub fn new(n: usize) -> Self {
        Self { tree: vec![0.0; n + 1], weights: vec![0.0; n], ops_since_rebuild: 0 }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// Grow to at least `n` slots (new slots weigh 0).
    pub fn grow(&mut self, n: usize) {
        if n <= self.weights.len() {
            return;
        }
        self.weights.resize(n, 0.0);
        self.tree = vec![0.0; n + 1];
        self.rebuild();
    }

    fn rebuild(&mut self) {
        for x in self.tree.iter_mut() {
            *x = 0.0;
        }
        for i in 0..self.weights.len() {
            let w = self.weights[i];
            if w != 0.0 {
                self.add_raw(i, w);
            }
        }
        self.ops_since_rebuild = 0;
    }

    fn add_raw(&mut self, i: usize, delta: f64) {
        let mut idx = i + 1;
        while idx < self.tree.len() {
            self.tree[idx] += delta;
            idx += idx & idx.wrapping_neg();
        }
    }

    pub fn set(&mut self, i: usize, w: f64) {
        debug_assert!(w >= 0.0);
        let delta = w - self.weights[i];
        self.weights[i] = w;
        if delta != 0.0 {
            self.add_raw(i, delta);
        }
        self.ops_since_rebuild += 1;
        if self.ops_since_rebuild >= REBUILD_EVERY {
            self.rebuild();
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total(&self) -> f64 {
        let mut idx = self.weights.len();
        let mut acc = 0.0;
        while idx > 0 {
            acc += self.tree[idx];
            idx -= idx & idx.wrapping_neg();
        }
        acc
    }

    /// Index of the slot containing cumulative mass `u` in `[0, total)`.
    ///
    /// Rounding can land the descent on a zero-weight slot at a boundary;
    /// the result is nudged to the nearest positive-weight slot so callers
    /// always receive a live event.
    pub fn sample(&self, u: f64) -> usize {
        let n = self.weights.len();
        let mut idx = 0usize;
        let mut rem = u;
        let mut mask = n.next_power_of_two();
        while mask > 0 {
            let next = idx + mask;
            if next < self.tree.len() && self.tree[next] <= rem {
                rem -= self.tree[next];
                idx = next;
            }
            mask >>= 1;
        }
        // idx slots have cumulative weight <= u; the hit is slot idx.
        let mut hit = idx.min(n - 1);
        if self.weights[hit] <= 0.0 {
            let fwd = (hit + 1..n).find(|&i| self.weights[i] > 0.0);
            hit = match fwd {
                Some(i) => i,
                None => (0..hit).rev().find(|&i| self.weights[i] > 0.0).unwrap_or(hit),
            };
        }
        hit
    }
}
