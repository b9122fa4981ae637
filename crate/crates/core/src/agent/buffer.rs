use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{FlacError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True for terminal transitions (no bootstrap).
    pub done: bool,
}

impl Transition {
    fn first_non_finite(&self) -> Option<usize> {
        self.state
            .iter()
            .chain(&self.action)
            .chain(std::iter::once(&self.reward))
            .chain(&self.next_state)
            .position(|v| !v.is_finite())
    }
}

/// A sampled minibatch, one transition per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(items: &[&Transition]) -> Batch {
        let n = items.len();
        let ds = items.first().map_or(0, |t| t.state.len());
        let da = items.first().map_or(0, |t| t.action.len());
        Batch {
            states: Array2::from_shape_fn((n, ds), |(i, j)| items[i].state[j]),
            actions: Array2::from_shape_fn((n, da), |(i, j)| items[i].action[j]),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states: Array2::from_shape_fn((n, ds), |(i, j)| items[i].next_state[j]),
            dones: items.iter().map(|t| t.done).collect(),
        }
    }
}

/// Fixed-capacity FIFO replay memory with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
    pushed: u64,
}

pub const DEFAULT_CAPACITY: usize = 1_000_000;

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
            pushed: 0,
        }
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

    /// Total number of transitions ever pushed.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if let Some(i) = t.first_non_finite() {
            return Err(FlacError::fault("transition", i));
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.pushed += 1;
        Ok(())
    }

    /// Stored transitions, oldest first.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.len() < batch || self.items.is_empty() {
            return Err(FlacError::NotReady {
                size: self.items.len(),
                requested: batch,
            });
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch, rng)?;
        let items: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Ok(Batch::from_transitions(&items))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition {
            state: vec![r, 0.0],
            action: vec![0.5],
            reward: r,
            next_state: vec![r + 1.0, 0.0],
            done: false,
        }
    }

    #[test]
    fn push_grows_then_overwrites_fifo() {
        let mut b = ReplayBuffer::new(2);
        b.push(t(1.0)).unwrap();
        assert_eq!(b.len(), 1);
        b.push(t(2.0)).unwrap();
        b.push(t(3.0)).unwrap();
        assert_eq!(b.len(), 2);
        let rewards: Vec<f64> = b.iter_fifo().map(|x| x.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
        assert_eq!(b.total_pushed(), 3);
    }

    #[test]
    fn default_capacity() {
        assert_eq!(DEFAULT_CAPACITY, 1_000_000);
    }

    #[test]
    fn rejects_non_finite() {
        let mut b = ReplayBuffer::new(4);
        let mut bad = t(1.0);
        bad.reward = f64::INFINITY;
        match b.push(bad) {
            Err(FlacError::NumericalFault { index, .. }) => assert_eq!(index, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(b.is_empty());
    }

    #[test]
    fn sampling() {
        let mut b = ReplayBuffer::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(b.sample(1, &mut rng), Err(FlacError::NotReady { .. })));
        b.push(t(7.0)).unwrap();
        let batch = b.sample(1, &mut rng).unwrap();
        assert_eq!(batch.rewards[0], 7.0);
        assert_eq!(batch.states.row(0).to_vec(), vec![7.0, 0.0]);
        assert!(matches!(b.sample(2, &mut rng), Err(FlacError::NotReady { .. })));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut b = ReplayBuffer::new(16);
        for i in 0..16 {
            b.push(t(i as f64)).unwrap();
        }
        let a = b.sample(5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let c = b.sample(5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, c);
    }
}
