//! Best hyperparameters from the published search grids, keyed by benchmark,
//! buffer size and algorithm.

use std::fmt;
use std::str::FromStr;

use mer_core::learners::{Algorithm, LearnerConfig};
use mer_core::nn::InitScheme;
use mer_core::StreamKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    Rotations,
    Permutations,
    ManyPermutations,
    Synthetic,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] =
        [Benchmark::Rotations, Benchmark::Permutations, Benchmark::ManyPermutations, Benchmark::Synthetic];

    /// Short name used in preset keys and result files.
    pub fn short(&self) -> &'static str {
        match self {
            Benchmark::Rotations => "rot",
            Benchmark::Permutations => "perm",
            Benchmark::ManyPermutations => "many",
            Benchmark::Synthetic => "synthetic",
        }
    }

    pub fn stream_kind(&self) -> StreamKind {
        match self {
            Benchmark::Rotations => StreamKind::Rotations,
            Benchmark::Permutations => StreamKind::Permutations,
            Benchmark::ManyPermutations => StreamKind::ManyPermutations,
            Benchmark::Synthetic => StreamKind::Synthetic,
        }
    }

    /// Buffer sizes with published settings.
    pub fn buffers(&self) -> &'static [usize] {
        match self {
            Benchmark::ManyPermutations => &[5120, 500],
            _ => &[5120, 500, 200],
        }
    }

    pub fn needs_mnist(&self) -> bool {
        *self != Benchmark::Synthetic
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rot" | "rotations" => Ok(Benchmark::Rotations),
            "perm" | "permutations" => Ok(Benchmark::Permutations),
            "many" | "many_permutations" | "many-permutations" => Ok(Benchmark::ManyPermutations),
            "synthetic" | "syn" => Ok(Benchmark::Synthetic),
            other => Err(format!("unknown benchmark `{other}` (expected rot, perm, many or synthetic)")),
        }
    }
}

pub fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    Algorithm::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
        format!("unknown algorithm `{s}` (expected one of {})", names.join(", "))
    })
}

/// Grid buffer closest to `buffer` on a log scale.
pub fn snap_buffer(benchmark: Benchmark, buffer: usize) -> usize {
    let target = (buffer.max(1) as f64).ln();
    *benchmark
        .buffers()
        .iter()
        .min_by(|a, b| {
            let da = ((**a as f64).ln() - target).abs();
            let db = ((**b as f64).ln() - target).abs();
            da.total_cmp(&db)
        })
        .expect("every benchmark has buffer sizes")
}

/// Hyperparameters of one preset; `batch` is the number of replayed memories (k - 1).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Best {
    alpha: f64,
    beta: f64,
    gamma: f64,
    batch: usize,
    s: usize,
    lambda: f64,
    strength: f64,
}

const BASE: Best = Best { alpha: 0.01, beta: 1.0, gamma: 1.0, batch: 0, s: 1, lambda: 0.0, strength: 0.0 };

fn best(b: Benchmark, m: usize, a: Algorithm) -> Best {
    use Algorithm::*;
    use Benchmark::*;
    // The synthetic stream has no published settings; it borrows the rotation ones.
    let b = if b == Synthetic { Rotations } else { b };
    match a {
        Online => Best { alpha: if b == Rotations { 0.0003 } else { 0.003 }, ..BASE },
        Independent | TaskInput => Best { alpha: 0.01, ..BASE },
        Ewc => match b {
            Rotations => Best { alpha: 0.001, lambda: 100.0, ..BASE },
            Permutations => Best { alpha: 0.01, lambda: 10.0, ..BASE },
            _ => Best { alpha: 0.003, lambda: 1.0, ..BASE },
        },
        Gem => {
            let alpha = if (b, m) == (ManyPermutations, 500) { 0.003 } else { 0.01 };
            let strength = match (b, m) {
                (ManyPermutations, 500) => 0.1,
                (Rotations, 5120) | (Permutations, 5120) | (Permutations, 500) => 1.0,
                _ => 0.0,
            };
            Best { alpha, strength, ..BASE }
        }
        ErReservoir => {
            let batch = match (b, m) {
                (Rotations, 500) => 5,
                (Rotations, 200) | (Permutations, 500) | (Permutations, 200) => 10,
                _ => 25,
            };
            Best { alpha: 0.1, batch, ..BASE }
        }
        ErTasks => {
            let alpha = match (b, m) {
                (ManyPermutations, 5120) => 0.003,
                (Rotations, 5120) => 0.03,
                _ => 0.01,
            };
            let batch = match (b, m) {
                (ManyPermutations, 500) => 5,
                (Permutations, 200) | (ManyPermutations, 5120) => 10,
                (Permutations, _) => 25,
                (Rotations, 200) => 50,
                _ => 100,
            };
            Best { alpha, batch, ..BASE }
        }
        MerA1 => {
            let alpha = match (b, m) {
                (Rotations, 500) | (Rotations, 200) => 0.1,
                _ => 0.03,
            };
            let beta = match (b, m) {
                (Rotations, 500) | (Rotations, 200) | (ManyPermutations, 5120) => 0.01,
                _ => 0.03,
            };
            let batch = match (b, m) {
                (ManyPermutations, _) => 5,
                (Rotations, 500) | (Rotations, 200) | (Permutations, 200) => 10,
                (Permutations, 500) => 25,
                _ => 100,
            };
            let s = if (b, m) == (Rotations, 200) { 5 } else { 10 };
            Best { alpha, beta, gamma: 1.0, batch, s, ..BASE }
        }
        MerObb => {
            let alpha = match (b, m) {
                (Rotations, 5120) | (Permutations, 5120) | (Permutations, 500) | (ManyPermutations, 5120) => 0.03,
                _ => 0.1,
            };
            let gamma = match (b, m) {
                (Permutations, 500) => 0.3,
                (_, 5120) => 0.1,
                _ => 0.03,
            };
            let batch = match (b, m) {
                (Permutations, 200) | (ManyPermutations, 500) => 5,
                (Rotations, 500) | (Permutations, 500) => 10,
                (Rotations, 200) | (ManyPermutations, 5120) => 25,
                (Permutations, 5120) => 50,
                _ => 100,
            };
            Best { alpha, gamma, batch, s: 1, ..BASE }
        }
        MerCel => {
            let alpha = match (b, m) {
                (Permutations, 5120) | (Permutations, 500) => 0.01,
                _ => 0.03,
            };
            let gamma = if b == Permutations { 0.1 } else { 0.03 };
            let batch = match (b, m) {
                (Permutations, 200) | (ManyPermutations, 500) => 5,
                (Permutations, 500) => 25,
                (Rotations, 5120) | (Permutations, 5120) => 100,
                _ => 50,
            };
            let s = match (b, m) {
                (Permutations, 200) => 2,
                (Rotations, _) => 5,
                _ => 10,
            };
            Best { alpha, gamma, batch, s, ..BASE }
        }
        // Not part of the published grids; Reptile on a stationary set uses MER-like defaults.
        ReptileOffline => Best { alpha: 0.03, beta: 0.03, batch: 10, s: 10, ..BASE },
    }
}

/// Learner configuration for `(benchmark, buffer, algorithm)`. Buffers off the
/// grid use the settings of the nearest grid buffer but keep their own size.
pub fn preset_config(benchmark: Benchmark, buffer: usize, algorithm: Algorithm) -> LearnerConfig {
    let p = best(benchmark, snap_buffer(benchmark, buffer), algorithm);
    LearnerConfig {
        alpha: p.alpha,
        beta: p.beta,
        gamma: p.gamma,
        k: p.batch + 1,
        s: p.s,
        buffer_capacity: buffer,
        ewc_lambda: p.lambda,
        gem_memory_strength: p.strength,
        init: InitScheme::Glorot,
        ..LearnerConfig::new(algorithm)
    }
}

/// Preset name such as `rot-5120-mer_a1`.
pub fn preset_name(benchmark: Benchmark, buffer: usize, algorithm: Algorithm) -> String {
    format!("{}-{}-{}", benchmark.short(), buffer, algorithm.name())
}

/// Parses `rot-5120-mer_a1` into its parts.
pub fn parse_preset(name: &str) -> Result<(Benchmark, usize, Algorithm), String> {
    let mut parts = name.splitn(3, '-');
    let (Some(b), Some(m), Some(a)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("preset `{name}` is not of the form <benchmark>-<buffer>-<algorithm>"));
    };
    let buffer = m.parse().map_err(|_| format!("preset `{name}`: buffer `{m}` is not an integer"))?;
    Ok((b.parse()?, buffer, parse_algorithm(a)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rot_5120_mer_a1() {
        let c = preset_config(Benchmark::Rotations, 5120, Algorithm::MerA1);
        assert_eq!((c.alpha, c.beta, c.gamma, c.k - 1, c.s), (0.03, 0.03, 1.0, 100, 10));
        assert_eq!(c.buffer_capacity, 5120);
        assert_eq!(c.init, InitScheme::Glorot);
    }

    #[test]
    fn spot_checks_against_the_grids() {
        let c = preset_config(Benchmark::Rotations, 200, Algorithm::MerA1);
        assert_eq!((c.alpha, c.beta, c.k - 1, c.s), (0.1, 0.01, 10, 5));
        let c = preset_config(Benchmark::ManyPermutations, 500, Algorithm::MerA1);
        assert_eq!((c.alpha, c.beta, c.k - 1, c.s), (0.03, 0.03, 5, 10));
        let c = preset_config(Benchmark::Rotations, 5120, Algorithm::ErReservoir);
        assert_eq!((c.alpha, c.k - 1), (0.1, 25));
        let c = preset_config(Benchmark::Rotations, 200, Algorithm::ErReservoir);
        assert_eq!((c.alpha, c.k - 1), (0.1, 10));
        let c = preset_config(Benchmark::Permutations, 5120, Algorithm::ErTasks);
        assert_eq!((c.alpha, c.k - 1), (0.01, 25));
        let c = preset_config(Benchmark::Permutations, 5120, Algorithm::MerObb);
        assert_eq!((c.alpha, c.gamma, c.k - 1, c.s), (0.03, 0.1, 50, 1));
        let c = preset_config(Benchmark::Permutations, 500, Algorithm::MerCel);
        assert_eq!((c.alpha, c.gamma, c.k - 1, c.s), (0.01, 0.1, 25, 10));
        let c = preset_config(Benchmark::ManyPermutations, 500, Algorithm::Gem);
        assert_eq!((c.alpha, c.gem_memory_strength), (0.003, 0.1));
        let c = preset_config(Benchmark::Rotations, 5120, Algorithm::Gem);
        assert_eq!((c.alpha, c.gem_memory_strength), (0.01, 1.0));
        let c = preset_config(Benchmark::Rotations, 5120, Algorithm::Ewc);
        assert_eq!((c.alpha, c.ewc_lambda), (0.001, 100.0));
        assert_eq!(preset_config(Benchmark::Rotations, 5120, Algorithm::Online).alpha, 0.0003);
    }

    #[test]
    fn off_grid_buffers_snap_on_log_scale() {
        assert_eq!(snap_buffer(Benchmark::Rotations, 1000), 500);
        assert_eq!(snap_buffer(Benchmark::Rotations, 2000), 5120);
        assert_eq!(snap_buffer(Benchmark::Rotations, 100), 200);
        assert_eq!(snap_buffer(Benchmark::ManyPermutations, 200), 500);
        assert_eq!(preset_config(Benchmark::Rotations, 1000, Algorithm::MerA1).buffer_capacity, 1000);
    }

    #[test]
    fn preset_names_round_trip() {
        for b in Benchmark::ALL {
            for a in Algorithm::ALL {
                let name = preset_name(b, 500, a);
                assert_eq!(parse_preset(&name).unwrap(), (b, 500, a));
            }
        }
        assert!(parse_preset("rot-5120").is_err());
        assert!(parse_preset("rot-big-mer_a1").is_err());
        assert!(parse_preset("cifar-200-mer_a1").is_err());
    }
}
