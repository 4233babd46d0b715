//! Deterministic random number generation for reproducible fixtures.
//!
//! Synthetic cohorts and model initialisation are part of the toolkit's
//! reproducibility contract, so the generator is pinned down to the last
//! constant instead of delegating to an external crate: xorshift64*
//! seeded through one splitmix64 step, uniform doubles from the top 53
//! bits, gaussians via the Box-Muller transform. The exact stream is
//! documented below so it can be reproduced in another language.

use std::f64::consts::TAU;

/// xorshift64* generator with a splitmix64-scrambled seed.
///
/// Stream definition:
/// - `state0 = splitmix64(seed)`, replaced by `0x9E3779B97F4A7C15` if zero;
/// - `splitmix64(x)`: `z = x + 0x9E3779B97F4A7C15`;
///   `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9`;
///   `z = (z ^ (z >> 27)) * 0x94D049BB133111EB`; result `z ^ (z >> 31)`;
/// - `next_u64`: `s ^= s >> 12; s ^= s << 25; s ^= s >> 27;`
///   output `s * 0x2545F4914F6CDD1D` (wrapping).
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
    cached_gaussian: Option<f64>,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let mut state = splitmix64(seed);
        if state == 0 {
            state = 0x9E37_79B9_7F4A_7C15;
        }
        Self {
            state,
            cached_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut s = self.state;
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        self.state = s;
        s.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)`: top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`: `(top 53 bits + 1) * 2^-53`.
    fn next_f64_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate.
    ///
    /// Box-Muller: `u1 in (0, 1]`, `u2 in [0, 1)` drawn in that order,
    /// `r = sqrt(-2 ln u1)`, `theta = tau * u2`; returns `r cos theta`
    /// and caches `r sin theta` for the next call.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.cached_gaussian.take() {
            return z;
        }
        let u1 = self.next_f64_open_low();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = TAU * u2;
        self.cached_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform draw below `n` via the 128-bit multiply-shift reduction
    /// `(next_u64 * n) >> 64`.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below requires n > 0");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// In-place Fisher-Yates shuffle, iterating `i = len-1 .. 1` and
    /// swapping with `j = next_below(i + 1)`.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            slice.swap(i, j);
        }
    }
}
