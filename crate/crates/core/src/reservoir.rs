//! Fixed-capacity uniform reservoir with an always-sorted mirror, giving
//! O(capacity) updates and O(1) order statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Reservoir {
    capacity: usize,
    slots: Vec<f64>,
    sorted: Vec<f64>,
    seen: u64,
    rng: ChaCha8Rng,
}

impl Reservoir {
    pub fn new(capacity: usize, seed: u64) -> Self {
        let capacity = capacity.max(1);
        Reservoir {
            capacity,
            slots: Vec::with_capacity(capacity),
            sorted: Vec::with_capacity(capacity),
            seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total number of values offered so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn samples(&self) -> &[f64] {
        &self.slots
    }

    /// Offers a finite value (Algorithm R). Non-finite values are ignored.
    pub fn push(&mut self, v: f64) {
        if !v.is_finite() {
            return;
        }
        self.seen += 1;
        if self.slots.len() < self.capacity {
            self.slots.push(v);
            self.insert_sorted(v);
            return;
        }
        let j = self.rng.random_range(0..self.seen);
        if (j as usize) < self.capacity {
            let old = std::mem::replace(&mut self.slots[j as usize], v);
            self.remove_sorted(old);
            self.insert_sorted(v);
        }
    }

    fn insert_sorted(&mut self, v: f64) {
        let at = self.sorted.partition_point(|x| x.total_cmp(&v).is_lt());
        self.sorted.insert(at, v);
    }

    fn remove_sorted(&mut self, v: f64) {
        let at = self.sorted.partition_point(|x| x.total_cmp(&v).is_lt());
        debug_assert!(self.sorted[at] == v);
        self.sorted.remove(at);
    }

    /// Order statistic at rank `floor(q * (n - 1))`; `None` when empty.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        if self.sorted.is_empty() {
            return None;
        }
        let q = q.clamp(0.0, 1.0);
        let idx = (q * (self.sorted.len() - 1) as f64).floor() as usize;
        Some(self.sorted[idx])
    }

    pub fn median(&self) -> Option<f64> {
        self.quantile(0.5)
    }
}
