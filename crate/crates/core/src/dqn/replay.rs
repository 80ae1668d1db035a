use rand::Rng;

use super::AgentState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub s: AgentState,
    pub a_index: usize,
    pub r: f64,
    pub s_next: AgentState,
}

/// Fixed-capacity ring; the oldest experience is overwritten once full.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    buffer: Vec<Experience>,
    cursor: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            buffer: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn push(&mut self, e: Experience) {
        if self.buffer.len() < self.capacity {
            self.buffer.push(e);
        } else {
            self.buffer[self.cursor] = e;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stored experiences, oldest first.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.buffer.len() < self.capacity {
            0
        } else {
            self.cursor
        };
        self.buffer[split..].iter().chain(&self.buffer[..split])
    }

    /// `min(k, len)` distinct experiences chosen uniformly.
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<&Experience> {
        let k = k.min(self.buffer.len());
        rand::seq::index::sample(rng, self.buffer.len(), k)
            .into_iter()
            .map(|i| &self.buffer[i])
            .collect()
    }
}
