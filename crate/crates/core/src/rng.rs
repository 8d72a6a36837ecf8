//! Reproducible random streams.
//!
//! Every stochastic routine in the crate draws from a [`RandomStream`], which
//! is ChaCha20 (RFC 8439 block function, 64-bit stream counter) keyed by a
//! 64-bit seed: the seed occupies the first eight key bytes in little-endian
//! order and the remaining 24 key bytes are zero. Uniform doubles take the top
//! 53 bits of each 64-bit output. Normal variates use the Box–Muller transform
//! with `libm` elementary functions, so streams are bit-identical across
//! platforms.
//!
//! Independent sub-streams come from [`mix`], the SplitMix64 output function
//! applied to `master ^ ((index + 1) * 0x9E3779B97F4A7C15)`. For a fixed
//! master seed the map `index -> mix(master, index)` is a bijection, so
//! distinct indices never share a seed.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Derives the seed of sub-stream `index` from `master`.
pub fn mix(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of indices into one seed: `mix(mix(mix(master, a), b), c)`.
pub fn mix_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |seed, &index| mix(seed, index))
}

pub struct RandomStream {
    core: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self {
            core: ChaCha20Rng::from_seed(key),
            spare_normal: None,
        }
    }

    pub fn substream(master: u64, index: u64) -> Self {
        Self::new(mix(master, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` by rejection from the top of the range.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % bound;
            }
        }
    }

    /// Symmetric Bernoulli variate taken from the top bit of one output.
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard normal variate. Variates are produced in Box–Muller pairs;
    /// the cosine branch is returned first and the sine branch is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.normal();
        }
    }
}
