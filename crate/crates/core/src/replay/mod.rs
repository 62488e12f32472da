//! Bounded memories and the batch layouts used by the replay learners.
//!
//! Batch samplers come in two forms. The `plan_*` functions return [`Slot`]
//! lists that say which buffer entries (and where the current example) go
//! into each batch; the `sample_*` functions resolve a plan to references.
//! Plans let two learners be driven by one shared sample log.

mod reservoir;
mod ring;

pub use reservoir::{ReservoirBuffer, ReservoirOutcome};
pub use ring::TaskRingBuffer;

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::rng::Rng;
use crate::streams::Example;

/// One position in a replay batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    /// The incoming example.
    Current,
    /// Buffer entry by index.
    Memory(usize),
}

impl Slot {
    pub fn resolve<'a>(self, memory: &'a [Example], current: &'a Example) -> &'a Example {
        match self {
            Slot::Current => current,
            Slot::Memory(i) => &memory[i],
        }
    }
}

/// `count` buffer indices: without replacement when the buffer holds at least
/// `count` entries, with replacement otherwise. An empty buffer yields copies
/// of the current example so batch shapes never change.
fn draw_slots(len: usize, count: usize, rng: &mut Rng) -> Vec<Slot> {
    if count == 0 {
        return Vec::new();
    }
    if len == 0 {
        return vec![Slot::Current; count];
    }
    if len < count {
        return (0..count).map(|_| Slot::Memory(rng.random_range(0..len))).collect();
    }
    rand::seq::index::sample(rng, len, count).into_iter().map(Slot::Memory).collect()
}

/// `s` batches of `k` slots, each holding the current example once at a
/// uniform position and `k - 1` buffer draws.
pub fn plan_mer_batches(len: usize, s: usize, k: usize, rng: &mut Rng) -> Vec<Vec<Slot>> {
    (0..s)
        .map(|_| {
            let (batch, _) = plan_random_position_batch(len, k, rng);
            batch
        })
        .collect()
}

/// `s * k - s` buffer draws followed by `s` copies of the current example.
pub fn plan_big_batch(len: usize, s: usize, k: usize, rng: &mut Rng) -> Vec<Slot> {
    let draws = s * k - s;
    let mut batch = draw_slots(len, draws, rng);
    batch.extend(core::iter::repeat(Slot::Current).take(s));
    batch
}

/// `k - 1` buffer draws with the current example inserted at a uniform index.
pub fn plan_random_position_batch(len: usize, k: usize, rng: &mut Rng) -> (Vec<Slot>, usize) {
    let k = k.max(1);
    let mut batch = draw_slots(len, k - 1, rng);
    let pos = rng.random_range(0..k);
    batch.insert(pos, Slot::Current);
    (batch, pos)
}

fn resolve<'a>(plan: &[Slot], memory: &'a [Example], current: &'a Example) -> Vec<&'a Example> {
    plan.iter().map(|s| s.resolve(memory, current)).collect()
}

pub fn sample_mer_batches<'a>(
    buffer: &'a ReservoirBuffer<Example>,
    current: &'a Example,
    s: usize,
    k: usize,
    rng: &mut Rng,
) -> Vec<Vec<&'a Example>> {
    plan_mer_batches(buffer.len(), s, k, rng)
        .iter()
        .map(|b| resolve(b, buffer.items(), current))
        .collect()
}

pub fn sample_big_batch<'a>(
    buffer: &'a ReservoirBuffer<Example>,
    current: &'a Example,
    s: usize,
    k: usize,
    rng: &mut Rng,
) -> Vec<&'a Example> {
    resolve(&plan_big_batch(buffer.len(), s, k, rng), buffer.items(), current)
}

pub fn sample_random_position_batch<'a>(
    buffer: &'a ReservoirBuffer<Example>,
    k: usize,
    current: &'a Example,
    rng: &mut Rng,
) -> (Vec<&'a Example>, usize) {
    let (plan, pos) = plan_random_position_batch(buffer.len(), k, rng);
    (resolve(&plan, buffer.items(), current), pos)
}
