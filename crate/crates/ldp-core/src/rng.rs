//! Seedable deterministic randomness.
//!
//! Every stochastic operation in the crate takes a [`RandomnessSource`]
//! explicitly; there is no ambient RNG. The generator is xoshiro256++ seeded
//! through splitmix64, so a given seed yields a bit-identical stream on every
//! platform and run.

use crate::math::F64Ext;

/// Deterministic random stream. `Clone` forks the stream state, which is
/// occasionally useful in tests; production code should derive child sources
/// with [`RandomnessSource::derive`] instead so streams never overlap.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RandomnessSource {
    state: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl RandomnessSource {
    pub fn from_seed(seed: u64) -> Self {
        let mut s = seed;
        let state = [
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
        ];
        Self { state }
    }

    /// Derive an independent child stream keyed by `tag`. Used to give each
    /// experiment cell, record, or shard its own source.
    pub fn derive(&self, tag: u64) -> Self {
        // mix the parent state into a fresh seed rather than advancing it
        let mut s = self.state[0] ^ self.state[2].rotate_left(17) ^ tag.wrapping_mul(0xA24BAED4963EE407);
        let state = [
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
            splitmix64(&mut s),
        ];
        Self { state }
    }

    /// xoshiro256++ next.
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open01(&mut self) -> f64 {
        // 53 random bits, offset by half an ulp so 0 and 1 are excluded
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Uniform on the open interval (-1/2, 1/2).
    pub fn uniform_centered(&mut self) -> f64 {
        self.uniform_open01() - 0.5
    }

    /// Uniform on the open interval (lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_open01()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // rejection sampling for an unbiased draw
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Laplace(0, scale) via the inverse CDF of a single centered uniform:
    /// s = -scale * sgn(u) * ln(1 - 2|u|).
    pub fn laplace(&mut self, scale: f64) -> f64 {
        let u = self.uniform_centered();
        -scale * u.signum_or_zero() * F64Ext::ln_1p(-2.0 * u.abs())
    }

    /// Standard normal via Box-Muller (both uniforms strictly inside (0,1)).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open01();
        let u2 = self.uniform_open01();
        (-2.0 * u1.ln()).sqrt() * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Fisher-Yates shuffle of an index slice.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
