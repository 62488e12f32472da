use alloc::vec::Vec;

use rand::Rng as _;

use crate::rng::Rng;

/// What a reservoir update did with the offered record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReservoirOutcome {
    Appended,
    Replaced(usize),
    Rejected,
}

/// Fixed-capacity memory maintained with Algorithm R.
///
/// After `N` updates every presented record is resident with probability
/// `min(M, N) / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    age: u64,
}

impl<T> ReservoirBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, age: 0 }
    }

    /// Rebuilds a buffer from a snapshot. Fails if the parts are inconsistent.
    pub fn from_parts(items: Vec<T>, capacity: usize, age: u64) -> crate::Result<Self> {
        let expected = (age.min(capacity as u64)) as usize;
        if items.len() != expected {
            return Err(crate::error::invalid_input!(
                "{} items for capacity {capacity} and age {age}",
                items.len()
            ));
        }
        Ok(Self { items, capacity, age })
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

    /// Number of update attempts so far.
    pub fn age(&self) -> u64 {
        self.age
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn into_items(self) -> Vec<T> {
        self.items
    }

    pub fn update(&mut self, record: T, rng: &mut Rng) -> ReservoirOutcome {
        if self.age < self.capacity as u64 {
            return self.update_with_draw(record, 0);
        }
        let j = rng.random_range(0..=self.age);
        self.update_with_draw(record, j)
    }

    /// Applies the update rule with an externally drawn `j` in `[0, age]`.
    /// `j` is ignored while the buffer is still filling.
    pub fn update_with_draw(&mut self, record: T, j: u64) -> ReservoirOutcome {
        let outcome = if self.age < self.capacity as u64 {
            self.items.push(record);
            ReservoirOutcome::Appended
        } else if j < self.capacity as u64 {
            self.items[j as usize] = record;
            ReservoirOutcome::Replaced(j as usize)
        } else {
            ReservoirOutcome::Rejected
        };
        self.age += 1;
        outcome
    }
}
