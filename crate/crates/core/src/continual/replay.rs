use rand::Rng;

use crate::SeededRng;

/// Fixed-capacity sample of past training nodes with the labels they had when admitted.
///
/// Admission is reservoir sampling, so after `n` distinct offers every offered
/// node is held with probability `capacity / n`.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<(String, usize)>,
    seen: usize,
    rng: SeededRng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity),
            seen: 0,
            rng: crate::rng_for(seed, "replay"),
        }
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

    pub fn items(&self) -> &[(String, usize)] {
        &self.items
    }

    /// Offers a node. Nodes already held are ignored.
    pub fn offer(&mut self, id: &str, label: usize) {
        if self.capacity == 0 || self.items.iter().any(|(x, _)| x == id) {
            return;
        }
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push((id.to_string(), label));
        } else {
            let j = self.rng.gen_range(0..self.seen);
            if j < self.capacity {
                self.items[j] = (id.to_string(), label);
            }
        }
    }
}
