//! Fixed-capacity experience replay.

use rand::Rng;

use super::Transition;

/// Ring buffer that overwrites its oldest entry once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| self.items[rng.random_range(0..self.items.len())]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64) -> Transition {
        Transition { obs: [tag; 3], action_index: 1, reward: tag, next_obs: [tag; 3], terminated: false }
    }

    #[test]
    fn overwrites_oldest_first() {
        let mut buf = ReplayBuffer::new(5);
        for i in 0..8 {
            buf.push(tr(i as f64));
        }
        assert_eq!(buf.len(), 5);
        let mut rewards: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn sampling_is_seeded_and_in_range() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(tr(i as f64));
        }
        let a = buf.sample(32, &mut ChaCha8Rng::seed_from_u64(1));
        let b = buf.sample(32, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(a.iter().all(|t| (0.0..10.0).contains(&t.reward)));
        assert!(ReplayBuffer::new(3).sample(4, &mut ChaCha8Rng::seed_from_u64(1)).is_empty());
    }
}
