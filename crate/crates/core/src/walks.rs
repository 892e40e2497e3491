//! Exact laws of the two auxiliary walks.
//!
//! * The distance from the root of the simple random walk on `T^d`: from
//!   distance 0 every step goes up (all root neighbors sit at distance 1);
//!   from distance `k >= 1` the walk goes up with probability `d/(d+1)` and
//!   down with probability `1/(d+1)`. The generating function of the
//!   distance is bounded by the one of the biased walk on the integers,
//!   `[dx/(d+1) + 1/((d+1)x)]^n`, and the exact chain lets the bound be
//!   checked as an inequality.
//! * The coalescence time of two independent child-only walks from the
//!   root: geometric, `P(tau = k) = d^{-k}(1 - 1/d)`.

use crate::rng::Stream;
use crate::stats::KahanSum;
use crate::{Error, Result};

/// Exact law of the root distance after `n` steps of the simple random walk.
#[derive(Debug, Clone)]
pub struct DistanceDistribution {
    n: usize,
    /// `pmf[k] = P(|X_n| = k)`; entries with the wrong parity are zero.
    pmf: Vec<f64>,
}

impl DistanceDistribution {
    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }
}

/// Distance-chain law after `n` steps, by exact dynamic programming.
pub fn distance_pmf(d: usize, n: usize) -> DistanceDistribution {
    assert!(d >= 2, "degree must be at least 2");
    let up = d as f64 / (d + 1) as f64;
    let down = 1.0 / (d + 1) as f64;
    let mut cur = vec![0.0f64; n + 1];
    cur[0] = 1.0;
    let mut next = vec![0.0f64; n + 1];
    for _ in 0..n {
        for x in next.iter_mut() {
            *x = 0.0;
        }
        for (k, &p) in cur.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            if k == 0 {
                next[1] += p;
            } else {
                if k + 1 <= n {
                    next[k + 1] += up * p;
                }
                next[k - 1] += down * p;
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    DistanceDistribution { n, pmf: cur }
}

/// `E[x^{|X_n|}]`, exact; only defined for `x` in `(0, 1]` where the
/// comparison bound is claimed.
pub fn distance_gen_fn(d: usize, n: usize, x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "generating-function argument x={x} outside (0, 1]"
        )));
    }
    let dist = distance_pmf(d, n);
    Ok(gen_fn_of(&dist, x))
}

/// Generating function of an already computed distance law.
pub fn gen_fn_of(dist: &DistanceDistribution, x: f64) -> f64 {
    let mut sum = KahanSum::default();
    let mut xk = 1.0;
    for &p in dist.pmf() {
        sum.add(p * xk);
        xk *= x;
    }
    sum.value()
}

/// The comparison bound `[dx/(d+1) + 1/((d+1)x)]^n`.
pub fn distance_gen_fn_bound(d: usize, n: usize, x: f64) -> f64 {
    (d as f64 * x / (d + 1) as f64 + 1.0 / ((d + 1) as f64 * x)).powi(n as i32)
}

/// Geometric law of the coalescence time of two independent child-only
/// walks from the root.
#[derive(Debug, Clone, Copy)]
pub struct CoalescenceLaw {
    d: usize,
}

impl CoalescenceLaw {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidInput(format!(
                "degree must be at least 2, got {d}"
            )));
        }
        Ok(Self { d })
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    /// `P(tau = k) = d^{-k} (1 - 1/d)`.
    pub fn pmf(&self, k: u32) -> f64 {
        let d = self.d as f64;
        (1.0 - 1.0 / d) / d.powi(k as i32)
    }

    /// `P(tau >= k) = d^{-k}`.
    pub fn tail(&self, k: u32) -> f64 {
        (self.d as f64).powi(-(k as i32))
    }

    /// `E[s^tau] = (d-1)/(d-s)` for `s` in `(0, d)`.
    pub fn mgf(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) || s >= self.d as f64 {
            return Err(Error::SeriesDiverges { s, d: self.d });
        }
        Ok((self.d as f64 - 1.0) / (self.d as f64 - s))
    }
}

/// `P(tau = k)` on `T^d`.
pub fn tau_pmf(d: usize, k: u32) -> f64 {
    CoalescenceLaw { d }.pmf(k)
}

/// `E[s^tau]` on `T^d`.
pub fn tau_mgf(d: usize, s: f64) -> Result<f64> {
    CoalescenceLaw::new(d)?.mgf(s)
}

/// Two independent child-only walks of length `n` from the root, and the
/// index of their last common vertex capped at `n`.
pub fn sample_pair_walk(d: usize, n: usize, rng: &mut Stream) -> (Vec<u16>, Vec<u16>, usize) {
    assert!(n >= 1);
    assert!(d >= 2);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        a.push(rng.index(d) as u16);
        b.push(rng.index(d) as u16);
    }
    // Walks agree up to the length of the common digit prefix.
    let mut tau = 0;
    while tau < n && a[tau] == b[tau] {
        tau += 1;
    }
    (a, b, tau)
}
