use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded ring buffer with uniform batch sampling without replacement
/// within a batch.
#[derive(Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    data: Vec<T>,
    next: usize,
    rng: ChaCha8Rng,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            data: Vec::with_capacity(capacity.min(1024)),
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.data.len() < self.capacity {
            self.data.push(item);
        } else {
            self.data[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Distinct indices drawn uniformly (partial Fisher-Yates).
    pub fn sample_indices(&mut self, batch: usize) -> Vec<usize> {
        let n = self.data.len();
        let batch = batch.min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..batch {
            let j = self.rng.gen_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(batch);
        idx
    }

    pub fn get(&self, idx: usize) -> &T {
        &self.data[idx]
    }
}
