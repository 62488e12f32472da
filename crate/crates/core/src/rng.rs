//! Seed handling.
//!
//! A run is driven by a single master seed. Independent sub-seeds for model
//! initialization, stream construction, buffer sampling and probes are derived
//! with a SplitMix64 counter, so an ablation can vary one source of randomness
//! while keeping the others fixed.

use rand::SeedableRng;

/// Generator used everywhere in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the `index`-th child seed of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Standard normal draw (Box-Muller).
pub fn standard_normal(rng: &mut Rng) -> f64 {
    use rand::Rng as _;
    // 1 - u keeps the log argument in (0, 1].
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Named sources of randomness in one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedSource {
    Init = 1,
    Stream = 2,
    Buffer = 3,
    Sampling = 4,
    Probe = 5,
    Environment = 6,
}

/// Sub-seeds of one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    pub master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn seed(&self, source: SeedSource) -> u64 {
        derive_seed(self.master, source as u64)
    }

    pub fn rng(&self, source: SeedSource) -> Rng {
        rng_from_seed(self.seed(source))
    }
}
