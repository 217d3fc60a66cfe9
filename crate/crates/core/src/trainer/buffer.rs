use rand::Rng;

use crate::error::{Error, Result};
use crate::nnkit::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s2: Vec<f64>,
    /// Terminal only: a horizon cut still bootstraps.
    pub done: bool,
}

/// Column-major view of a sampled minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Tensor<f64>,
    pub actions: Tensor<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Tensor<f64>,
    pub dones: Vec<bool>,
}

/// Fixed-capacity ring store; the oldest transition is overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay capacity must be at least 1");
        Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Slot indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::contract("sampling from an empty replay buffer"));
        }
        Ok((0..n).map(|_| rng.gen_range(0..self.items.len())).collect())
    }

    pub fn gather(&self, idx: &[usize]) -> Batch {
        let rows = |f: &dyn Fn(&Transition) -> &[f64]| {
            let rows: Vec<&[f64]> = idx.iter().map(|&i| f(&self.items[i])).collect();
            Tensor::from_rows(&rows).expect("transitions share dimensions")
        };
        Batch {
            states: rows(&|t| &t.s),
            actions: rows(&|t| &t.a),
            rewards: idx.iter().map(|&i| self.items[i].r).collect(),
            next_states: rows(&|t| &t.s2),
            dones: idx.iter().map(|&i| self.items[i].done).collect(),
        }
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(n, rng)?;
        Ok(self.gather(&idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(x: f64) -> Transition {
        Transition { s: vec![x], a: vec![0.0], r: x, s2: vec![x + 1.0], done: false }
    }

    #[test]
    fn oldest_is_evicted_at_capacity() {
        let mut b = ReplayBuffer::new(2);
        for x in [1.0, 2.0, 3.0] {
            b.push(tr(x));
        }
        assert_eq!(b.len(), 2);
        let mut rs: Vec<f64> = (0..2).map(|i| b.get(i).r).collect();
        rs.sort_by(f64::total_cmp);
        assert_eq!(rs, vec![2.0, 3.0]);
    }

    #[test]
    fn single_item_is_sampled_with_replacement() {
        let mut b = ReplayBuffer::new(8);
        b.push(tr(5.0));
        let batch = b.sample_batch(4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(batch.rewards, vec![5.0; 4]);
        assert_eq!(batch.next_states.shape(), &[4, 1]);
    }

    #[test]
    fn empty_buffer_refuses_to_sample() {
        let b = ReplayBuffer::new(4);
        assert!(matches!(b.sample_batch(1, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn sampled_slots_pass_a_chi_square_uniformity_test() {
        let k = 50;
        let mut b = ReplayBuffer::new(k);
        for i in 0..k {
            b.push(tr(i as f64));
        }
        let n = 100_000;
        let mut counts = vec![0usize; k];
        for i in b.sample_indices(n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap() {
            counts[i] += 1;
        }
        let e = n as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 0.99 quantile of χ² with 49 degrees of freedom
        assert!(chi2 < 74.92, "chi2 {chi2}");
    }
}
