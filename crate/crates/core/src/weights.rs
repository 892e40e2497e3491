//! Finite-support laws of the i.i.d. vertex weights and quenched
//! environments realizing them on the tree.
//!
//! The weight law is restricted to finite support. Any bounded law can be
//! approximated this way, and finite support is what makes the
//! transfer-matrix moment computations exact. The bound `M` is stored
//! explicitly rather than inferred from the support because the analytic
//! bounds consume it as a (possibly loose) a-priori constant.

use crate::rng::{self, Stream};
use crate::tree::VertexId;
use crate::{Error, Result};
use serde::Serialize;

/// Probabilities must sum to one within this tolerance.
const PROB_SUM_TOL: f64 = 1e-12;

/// A finite-support law for the vertex weight, together with its a-priori
/// bound `M >= max support value`.
#[derive(Debug, Clone, Serialize)]
pub struct WeightDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
    /// Cumulative probabilities; last entry pinned to exactly 1.
    #[serde(skip)]
    cum: Vec<f64>,
    bound: f64,
}

impl WeightDistribution {
    /// Validate and build a distribution from `(value, probability)` pairs
    /// and the explicit bound `M`.
    pub fn new(support: &[(f64, f64)], bound: f64) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "bound M must be positive and finite, got {bound}"
            )));
        }
        let mut total = 0.0;
        for &(v, p) in support {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "support value {v} is not a nonnegative real"
                )));
            }
            if v > bound {
                return Err(Error::InvalidDistribution(format!(
                    "support value {v} exceeds bound M={bound}"
                )));
            }
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(format!(
                    "probability {p} outside [0,1]"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        if !support.iter().any(|&(v, p)| v > 0.0 && p > 0.0) {
            return Err(Error::InvalidDistribution(
                "assumption mu(rho > 0) > 0 violated: no positive value has positive probability"
                    .into(),
            ));
        }
        let values: Vec<f64> = support.iter().map(|&(v, _)| v).collect();
        let probs: Vec<f64> = support.iter().map(|&(_, p)| p).collect();
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cum.push(acc);
        }
        // Pin the last cumulative weight so inverse-CDF lookups never fall
        // off the end from rounding.
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self { values, probs, cum, bound })
    }

    /// Point mass at `value` (covers the unweighted process `rho = 1`).
    pub fn constant(value: f64) -> Result<Self> {
        Self::new(&[(value, 1.0)], value)
    }

    /// Support values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Support probabilities, aligned with [`Self::values`].
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The explicit bound `M`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Number of support points.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// k-th raw moment `E rho^k`, an exact finite sum.
    pub fn moment(&self, k: u32) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(&v, &p)| p * v.powi(k as i32))
            .sum()
    }

    /// Index of the support class a uniform `u in [0,1)` falls into.
    #[inline]
    pub(crate) fn class_of_unit(&self, u: f64) -> usize {
        // Support sizes are tiny; a linear scan beats binary search.
        for (j, &c) in self.cum.iter().enumerate() {
            if u < c {
                return j;
            }
        }
        self.cum.len() - 1
    }

    /// Draw one weight.
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        self.values[self.class_of_unit(rng.u01())]
    }
}

/// A deterministic map from vertices to weights realizing i.i.d. draws of a
/// [`WeightDistribution`].
///
/// The weight at a vertex is a pure function of `(master_seed, digit path)`:
/// the digit path is folded through a keyed hash chain and the final state is
/// inverted through the distribution's CDF. This gives a lazy environment on
/// the infinite tree with O(1) memory and exact reproducibility across
/// processes and platforms.
#[derive(Debug, Clone, Serialize)]
pub struct QuenchedEnvironment {
    master_seed: u64,
    distribution: WeightDistribution,
}

/// Domain separator so environment hashes never collide with other uses of
/// the same master seed.
const ENV_SALT: u64 = 0x7765_6967_6874_7331;

impl QuenchedEnvironment {
    pub fn new(master_seed: u64, distribution: WeightDistribution) -> Self {
        Self { master_seed, distribution }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn distribution(&self) -> &WeightDistribution {
        &self.distribution
    }

    /// Hash-chain state at the root.
    #[inline]
    pub(crate) fn root_hash(&self) -> u64 {
        rng::absorb(rng::mix64(self.master_seed ^ ENV_SALT), 0)
    }

    /// Extend a vertex hash-chain state to one child.
    #[inline]
    pub(crate) fn child_hash(state: u64, digit: u16) -> u64 {
        rng::absorb(state, 1 + digit as u64)
    }

    /// Support-class index for a vertex given its chain state.
    #[inline]
    pub(crate) fn class_from_hash(&self, state: u64) -> usize {
        self.distribution.class_of_unit(rng::unit_from_hash(state))
    }

    fn hash_of(&self, v: &VertexId) -> u64 {
        let mut h = self.root_hash();
        for &d in v.digits() {
            h = Self::child_hash(h, d);
        }
        h
    }

    /// Support-class index of the weight at `v`.
    pub fn weight_class_of(&self, v: &VertexId) -> usize {
        self.class_from_hash(self.hash_of(v))
    }

    /// The weight at `v`; deterministic in `(master_seed, v)`.
    pub fn weight_of(&self, v: &VertexId) -> f64 {
        self.distribution.values()[self.weight_class_of(v)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::VertexId;

    fn two_point_01() -> WeightDistribution {
        WeightDistribution::new(&[(0.0, 0.5), (1.0, 0.5)], 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(WeightDistribution::new(&[], 1.0).is_err());
        assert!(WeightDistribution::new(&[(1.0, 0.9)], 1.0).is_err());
        assert!(WeightDistribution::new(&[(2.0, 1.0)], 1.0).is_err());
        assert!(WeightDistribution::new(&[(-1.0, 1.0)], 1.0).is_err());
        // All mass on zero violates mu(rho > 0) > 0.
        let err = WeightDistribution::new(&[(0.0, 1.0)], 1.0).unwrap_err();
        assert!(err.to_string().contains("mu(rho > 0) > 0"), "{err}");
    }

    #[test]
    fn degenerate_distribution_allowed() {
        let d = WeightDistribution::constant(1.0).unwrap();
        assert_eq!(d.moment(2), 1.0);
        assert_eq!(d.moment(1), 1.0);
    }

    #[test]
    fn loose_bound_accepted() {
        let d = WeightDistribution::new(&[(1.0, 1.0)], 5.0).unwrap();
        assert_eq!(d.bound(), 5.0);
    }

    #[test]
    fn moment_two_point_half() {
        let d = two_point_01();
        assert_eq!(d.moment(2), 0.5);
    }

    #[test]
    fn moment_weighted_two_point() {
        // 0.3 * 0.5^2 + 0.7 * 2^2 = 2.875
        let d = WeightDistribution::new(&[(0.5, 0.3), (2.0, 0.7)], 2.0).unwrap();
        assert!((d.moment(2) - 2.875).abs() < 1e-15);
    }

    #[test]
    fn moment_monte_carlo_agrees() {
        // Independent sampling route for the same second moment.
        let d = WeightDistribution::new(&[(0.5, 0.3), (2.0, 0.7)], 2.0).unwrap();
        let mut rng = Stream::new(9001);
        let n = 1_000_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = d.sample(&mut rng);
            let x2 = x * x;
            sum += x2;
            sumsq += x2 * x2;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let sigma = (var / n as f64).sqrt();
        assert!(
            (mean - 2.875).abs() < 3.0 * sigma,
            "mc mean {mean} vs exact 2.875 (3 sigma {})",
            3.0 * sigma
        );
    }

    #[test]
    fn jensen_between_first_and_second_moment() {
        let d = WeightDistribution::new(&[(0.2, 0.4), (1.5, 0.6)], 2.0).unwrap();
        let m1 = d.moment(1);
        let m2 = d.moment(2);
        assert!(m1 * m1 <= m2 + 1e-15);
        assert!(m2 <= d.bound() * d.bound() + 1e-15);
        // Exact equality on a degenerate law.
        let c = WeightDistribution::constant(0.7).unwrap();
        assert!((c.moment(1).powi(2) - c.moment(2)).abs() < 1e-15);
    }

    #[test]
    fn sample_frequencies_converge() {
        let d = two_point_01();
        let mut rng = Stream::new(17);
        let n = 1_000_000u64;
        let ones = (0..n).filter(|_| d.sample(&mut rng) == 1.0).count() as f64;
        let frac = ones / n as f64;
        assert!((frac - 0.5).abs() < 0.002, "fraction of ones {frac}");
    }

    #[test]
    fn sample_stays_in_support() {
        let d = WeightDistribution::new(&[(0.25, 0.2), (0.5, 0.3), (2.0, 0.5)], 2.0).unwrap();
        let mut rng = Stream::new(5);
        for _ in 0..10_000 {
            let x = d.sample(&mut rng);
            assert!(d.values().contains(&x));
        }
    }

    #[test]
    fn weight_of_is_deterministic() {
        let env = QuenchedEnvironment::new(424242, two_point_01());
        let v = VertexId::from_digits(&[0, 1, 1, 0]);
        assert_eq!(env.weight_of(&v), env.weight_of(&v));
        let env2 = QuenchedEnvironment::new(424242, two_point_01());
        assert_eq!(env.weight_of(&v), env2.weight_of(&v));
    }

    #[test]
    fn constant_law_everywhere() {
        let env =
            QuenchedEnvironment::new(7, WeightDistribution::constant(0.75).unwrap());
        let mut v = VertexId::root();
        for digit in [0u16, 2, 1, 0, 2] {
            assert_eq!(env.weight_of(&v), 0.75);
            v = v.child(digit);
        }
    }

    #[test]
    fn environment_histogram_matches_law() {
        // Chi-square goodness of fit over 1e5 distinct vertices at the
        // 0.999 level (statrs supplies the critical value).
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let dist =
            WeightDistribution::new(&[(0.25, 0.2), (0.5, 0.3), (2.0, 0.5)], 2.0).unwrap();
        let env = QuenchedEnvironment::new(20260809, dist.clone());
        let mut counts = vec![0u64; dist.len()];
        let total = 100_000u64;
        // Distinct depth-3 vertices of a d=50 tree: base-50 digits of a
        // running counter (100_000 < 50^3, so no duplicates).
        for i in 0..total {
            let digits = [
                (i % 50) as u16,
                ((i / 50) % 50) as u16,
                ((i / 2500) % 50) as u16,
            ];
            let v = VertexId::from_digits(&digits);
            let w = env.weight_of(&v);
            let class = dist.values().iter().position(|&x| x == w).unwrap();
            counts[class] += 1;
        }
        let mut stat = 0.0;
        for (j, &c) in counts.iter().enumerate() {
            let expected = dist.probs()[j] * total as f64;
            stat += (c as f64 - expected).powi(2) / expected;
        }
        let crit = ChiSquared::new((dist.len() - 1) as f64)
            .unwrap()
            .inverse_cdf(0.999);
        assert!(stat < crit, "chi-square {stat} above 0.999 critical {crit}");
    }

    #[test]
    fn nearby_vertices_look_independent() {
        // Pair correlation between parent and child weights for a fair coin
        // law; a chi-square on the 2x2 contingency table.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let env = QuenchedEnvironment::new(99, two_point_01());
        let mut table = [[0u64; 2]; 2];
        let n = 40_000u32;
        for i in 0..n {
            let parent = VertexId::from_digits(&[(i % 200) as u16, (i / 200) as u16]);
            let child = parent.child(0);
            let a = env.weight_of(&parent) as usize;
            let b = env.weight_of(&child) as usize;
            table[a][b] += 1;
        }
        let expected = n as f64 / 4.0;
        let stat: f64 = table
            .iter()
            .flatten()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let crit = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi-square {stat} above 0.999 critical {crit}");
    }
}
