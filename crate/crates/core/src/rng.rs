//! Deterministic keyed random number streams.
//!
//! Everything stochastic in this crate draws from a [`Stream`]: a splitmix64
//! generator whose initial state is derived by hashing a master seed together
//! with a list of integer tags (replica index, grid index, purpose tag, ...).
//! Streams derived from distinct tag lists are statistically independent and
//! stable across platforms, compiler versions and thread schedules, which is
//! what makes merged parallel statistics reproducible.
//!
//! Not cryptographic. Do not use for secrets.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer: a strong 64-bit avalanche mix.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Absorb one word into a running hash state.
#[inline]
pub fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ word.wrapping_add(GOLDEN))
}

/// A splitmix64 stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    state: u64,
}

impl Stream {
    /// Stream seeded directly.
    pub fn new(seed: u64) -> Self {
        Self { state: mix64(seed ^ GOLDEN) }
    }

    /// Stream keyed by a master seed and a tag path.
    ///
    /// Distinct tag paths give independent streams; the same path always
    /// gives the same stream.
    pub fn derive(master: u64, tags: &[u64]) -> Self {
        let mut h = mix64(master ^ GOLDEN);
        for &t in tags {
            h = absorb(h, t);
        }
        Self { state: h }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn u01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in `(0, 1]`; safe to feed into `ln`.
    #[inline]
    pub fn u01_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64
    }

    /// Exponential variate with the given rate (mean `1/rate`).
    ///
    /// Rate 0 yields `+inf`, which models a clock that never rings.
    #[inline]
    pub fn exp(&mut self, rate: f64) -> f64 {
        debug_assert!(rate >= 0.0);
        -self.u01_open().ln() / rate
    }

    /// Uniform index in `[0, n)`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // 53-bit uniform scaled; bias is negligible for the index ranges
        // used here (far below 2^53).
        let i = (self.u01() * n as f64) as usize;
        i.min(n - 1)
    }
}

/// Map a hash word to a uniform in `[0, 1)`.
#[inline]
pub fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
